//! On-disk formats: candidate JSON lines, TREC qrels and runs, and the small
//! CSV files for propensities, scorer parameters and reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use debiasfirst::types::validate_run;
use debiasfirst::{CandidateList, PassageRef, PropensityMatrix, Ranking, RelevanceJudgments, RunRecord, ScorerParams};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CandidateRecord {
    query_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    query_features: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<String>,
    passages: Vec<PassageRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PassageRecord {
    passage_id: String,
    features: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<u32>,
    /// True rank of the passage, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rank: Option<usize>,
}

/// One candidate list and, when the file carries it, its true ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub list: CandidateList,
    pub truth: Option<Ranking>,
}

pub fn read_to_string(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Lines that carry content, with 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub fn parse_candidates(path: &Path, text: &str) -> CliResult<Vec<Instance>> {
    let mut out = Vec::new();
    for (line, content) in content_lines(text) {
        let err = |m: String| CliError::parse(path, line, m);
        let rec: CandidateRecord = serde_json::from_str(content).map_err(|e| err(e.to_string()))?;
        let given_ranks: Vec<Option<usize>> = rec.passages.iter().map(|p| p.rank).collect();
        let passages = rec
            .passages
            .into_iter()
            .map(|p| {
                let mut pr = PassageRef::new(p.passage_id, p.features);
                pr.relevance_label = p.label;
                pr
            })
            .collect();
        let mut list = CandidateList::new(rec.query_id, passages).map_err(|e| err(e.to_string()))?;
        if let Some(f) = rec.query_features {
            list = list.with_query_features(f);
        }
        if let Some(p) = rec.provenance {
            list = list.with_provenance(p);
        }
        let truth = if given_ranks.iter().all(Option::is_some) {
            let ranks = given_ranks.into_iter().flatten().collect();
            Some(Ranking::complete(ranks).map_err(|e| err(e.to_string()))?)
        } else if given_ranks.iter().any(Option::is_some) {
            return Err(err("rank given for some passages but not all".into()));
        } else {
            None
        };
        out.push(Instance { list, truth });
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("{}: no candidate lists", path.display())));
    }
    Ok(out)
}

pub fn read_candidates(path: &Path) -> CliResult<Vec<Instance>> {
    parse_candidates(path, &read_to_string(path)?)
}

pub fn candidates_to_string<'a>(
    items: impl IntoIterator<Item = (&'a CandidateList, Option<&'a Ranking>)>,
) -> CliResult<String> {
    let mut out = String::new();
    for (list, truth) in items {
        let ranks = truth.map(Ranking::ranks).transpose()?;
        let rec = CandidateRecord {
            query_id: list.query_id().to_owned(),
            query_features: list.query_features().map(<[f64]>::to_vec),
            provenance: Some(list.provenance().to_owned()),
            passages: list
                .passages()
                .iter()
                .enumerate()
                .map(|(i, p)| PassageRecord {
                    passage_id: p.passage_id.clone(),
                    features: p.features.clone(),
                    label: p.relevance_label,
                    rank: ranks.as_ref().map(|r| r[i]),
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&rec).map_err(|e| CliError::Data(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

/// The true ranking of an instance: the stored one, else labels descending
/// with ties in input order.
pub fn truth_of(inst: &Instance) -> CliResult<Ranking> {
    if let Some(t) = &inst.truth {
        return Ok(t.clone());
    }
    let labels: Option<Vec<u32>> = inst.list.passages().iter().map(|p| p.relevance_label).collect();
    let labels = labels.ok_or_else(|| {
        CliError::Data(format!(
            "query {} has neither true ranks nor labels for every passage",
            inst.list.query_id()
        ))
    })?;
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| labels[b].cmp(&labels[a]).then(a.cmp(&b)));
    Ok(Ranking::from_order(&order)?)
}

pub fn parse_qrels(path: &Path, text: &str) -> CliResult<RelevanceJudgments> {
    let mut j = RelevanceJudgments::new();
    for (line, content) in content_lines(text) {
        let err = |m: String| CliError::parse(path, line, m);
        let fields: Vec<&str> = content.split_whitespace().collect();
        let [qid, _, pid, grade] = fields[..] else {
            return Err(err(format!("expected 4 fields, found {}", fields.len())));
        };
        let grade: u32 = grade.parse().map_err(|_| err(format!("invalid grade {grade:?}")))?;
        j.insert(qid, pid, grade).map_err(|e| err(e.to_string()))?;
    }
    Ok(j)
}

pub fn read_qrels(path: &Path) -> CliResult<RelevanceJudgments> {
    parse_qrels(path, &read_to_string(path)?)
}

pub fn qrels_to_string(j: &RelevanceJudgments) -> String {
    let mut out = String::new();
    for (q, p, g) in j.iter() {
        writeln!(out, "{q} 0 {p} {g}").unwrap();
    }
    out
}

pub fn parse_run(path: &Path, text: &str) -> CliResult<Vec<RunRecord>> {
    let mut out = Vec::new();
    for (line, content) in content_lines(text) {
        let err = |m: String| CliError::parse(path, line, m);
        let fields: Vec<&str> = content.split_whitespace().collect();
        let [qid, _, pid, rank, score, tag] = fields[..] else {
            return Err(err(format!("expected 6 fields, found {}", fields.len())));
        };
        let rank: usize = rank
            .parse()
            .ok()
            .filter(|&r| r >= 1)
            .ok_or_else(|| err(format!("invalid rank {rank:?}")))?;
        let score: f64 = score.parse().map_err(|_| err(format!("invalid score {score:?}")))?;
        out.push(RunRecord {
            query_id: qid.to_owned(),
            passage_id: pid.to_owned(),
            rank,
            score,
            tag: tag.to_owned(),
        });
    }
    validate_run(&out).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(out)
}

pub fn read_run(path: &Path) -> CliResult<Vec<RunRecord>> {
    parse_run(path, &read_to_string(path)?)
}

pub fn run_to_string(records: &[RunRecord]) -> String {
    let mut out = String::new();
    for r in records {
        writeln!(out, "{} Q0 {} {} {} {}", r.query_id, r.passage_id, r.rank, r.score, r.tag).unwrap();
    }
    out
}

/// Groups run records by query, each group in rank order; queries keep
/// their first-appearance order.
pub fn group_run(records: &[RunRecord]) -> Vec<(String, Vec<&RunRecord>)> {
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    let mut groups: Vec<(String, Vec<&RunRecord>)> = Vec::new();
    for r in records {
        let slot = *index.entry(&r.query_id).or_insert_with(|| {
            groups.push((r.query_id.clone(), Vec::new()));
            groups.len() - 1
        });
        groups[slot].1.push(r);
    }
    for (_, g) in &mut groups {
        g.sort_by_key(|r| r.rank);
    }
    groups
}

/// Splits a CSV body after checking its header; skips `#` comment lines.
fn csv_rows<'a>(path: &Path, text: &'a str, header: &str) -> CliResult<Vec<(usize, Vec<&'a str>)>> {
    let mut lines = content_lines(text);
    match lines.next() {
        Some((_, h)) if h == header => {}
        Some((line, h)) => {
            return Err(CliError::parse(path, line, format!("expected header {header:?}, found {h:?}")))
        }
        None => return Err(CliError::Data(format!("{}: empty file", path.display()))),
    }
    let width = header.split(',').count();
    lines
        .map(|(line, l)| {
            let cells: Vec<&str> = l.split(',').map(str::trim).collect();
            if cells.len() == width {
                Ok((line, cells))
            } else {
                Err(CliError::parse(path, line, format!("expected {width} columns, found {}", cells.len())))
            }
        })
        .collect()
}

pub const PROPENSITY_HEADER: &str = "input_position,output_rank,omega";

pub fn propensity_to_string(omega: &PropensityMatrix) -> String {
    let mut out = format!("{PROPENSITY_HEADER}\n");
    let k = omega.k();
    for i in 1..=k {
        for r in 1..=k {
            writeln!(out, "{i},{r},{}", omega.omega(i, r)).unwrap();
        }
    }
    out
}

pub fn parse_propensity(path: &Path, text: &str) -> CliResult<PropensityMatrix> {
    let rows = csv_rows(path, text, PROPENSITY_HEADER)?;
    let k = (rows.len() as f64).sqrt().round() as usize;
    if k == 0 || k * k != rows.len() {
        return Err(CliError::Data(format!(
            "{}: {} cells do not form a square matrix",
            path.display(),
            rows.len()
        )));
    }
    let mut values = vec![None; k * k];
    for (line, cells) in rows {
        let err = |m: String| CliError::parse(path, line, m);
        let pos = |s: &str| -> CliResult<usize> {
            s.parse::<usize>()
                .ok()
                .filter(|&v| (1..=k).contains(&v))
                .ok_or_else(|| err(format!("position {s:?} outside 1..={k}")))
        };
        let (i, r) = (pos(cells[0])?, pos(cells[1])?);
        let v: f64 = cells[2].parse().map_err(|_| err(format!("invalid omega {:?}", cells[2])))?;
        if !(v.is_finite() && v > 0.0) {
            return Err(err(format!("omega {v} must be positive")));
        }
        let slot = &mut values[(i - 1) * k + r - 1];
        if slot.replace(v).is_some() {
            return Err(err(format!("duplicate cell ({i}, {r})")));
        }
    }
    let values: Vec<f64> = values.into_iter().map(|v| v.expect("all k² cells seen")).collect();
    Ok(PropensityMatrix::from_clamped(k, values)?)
}

pub fn read_propensity(path: &Path) -> CliResult<PropensityMatrix> {
    parse_propensity(path, &read_to_string(path)?)
}

pub const PARAMS_HEADER: &str = "name,value";

pub fn params_to_string(p: &ScorerParams) -> String {
    let mut out = format!("{PARAMS_HEADER}\nbias_scale,{}\n", p.bias_scale);
    for (i, w) in p.content_weights.iter().enumerate() {
        writeln!(out, "content_weights[{}],{w}", i + 1).unwrap();
    }
    for (i, w) in p.position_weights.iter().enumerate() {
        writeln!(out, "position_weights[{}],{w}", i + 1).unwrap();
    }
    out
}

pub fn parse_params(path: &Path, text: &str) -> CliResult<ScorerParams> {
    let mut bias_scale = None;
    let mut content = BTreeMap::new();
    let mut position = BTreeMap::new();
    for (line, cells) in csv_rows(path, text, PARAMS_HEADER)? {
        let err = |m: String| CliError::parse(path, line, m);
        let v: f64 = cells[1].parse().map_err(|_| err(format!("invalid value {:?}", cells[1])))?;
        let name = cells[0];
        let indexed = |prefix: &str| -> Option<usize> {
            name.strip_prefix(prefix)?.strip_suffix(']')?.parse().ok().filter(|&i| i >= 1)
        };
        let dup = if name == "bias_scale" {
            bias_scale.replace(v).is_some()
        } else if let Some(i) = indexed("content_weights[") {
            content.insert(i, v).is_some()
        } else if let Some(i) = indexed("position_weights[") {
            position.insert(i, v).is_some()
        } else {
            return Err(err(format!("unknown parameter {name:?}")));
        };
        if dup {
            return Err(err(format!("duplicate parameter {name:?}")));
        }
    }
    let dense = |m: BTreeMap<usize, f64>, what: &str| -> CliResult<Vec<f64>> {
        if m.keys().copied().eq(1..=m.len()) {
            Ok(m.into_values().collect())
        } else {
            Err(CliError::Data(format!("{}: {what} indices are not 1..n", path.display())))
        }
    };
    let params = ScorerParams {
        bias_scale: bias_scale
            .ok_or_else(|| CliError::Data(format!("{}: missing bias_scale", path.display())))?,
        content_weights: dense(content, "content_weights")?,
        position_weights: dense(position, "position_weights")?,
    };
    if !params.is_finite() {
        return Err(CliError::Data(format!("{}: non-finite parameter", path.display())));
    }
    Ok(params)
}

pub fn read_params(path: &Path) -> CliResult<ScorerParams> {
    parse_params(path, &read_to_string(path)?)
}

/// A CSV report: one `#` provenance line, a header, then rows.
pub fn report_to_string(provenance: &str, header: &str, rows: &[String]) -> String {
    let mut out = format!("# {provenance}\n{header}\n");
    for r in rows {
        out.push_str(r);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("test")
    }

    #[test]
    fn run_round_trips() {
        let recs = vec![
            RunRecord { query_id: "q1".into(), passage_id: "a".into(), rank: 1, score: 0.1 + 0.2, tag: "t".into() },
            RunRecord { query_id: "q1".into(), passage_id: "b".into(), rank: 2, score: -1e-300, tag: "t".into() },
        ];
        assert_eq!(parse_run(p(), &run_to_string(&recs)).unwrap(), recs);
    }

    #[test]
    fn run_with_gap_rejected() {
        let text = "q Q0 a 1 1 t\nq Q0 b 3 0 t\n";
        assert!(matches!(parse_run(p(), text), Err(CliError::Data(_))));
    }

    #[test]
    fn qrels_errors_carry_line_numbers() {
        let text = "q 0 a 1\n\nq 0 b x\n";
        match parse_qrels(p(), text) {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_qrels(p(), "q 0 a 1\nq 0 a 2\n"), Err(CliError::Parse { line: 2, .. })));
    }

    #[test]
    fn candidates_round_trip_with_truth() {
        let list = CandidateList::new(
            "q",
            vec![
                PassageRef::new("a", vec![0.5, 1.0 / 3.0]).with_label(1),
                PassageRef::new("b", vec![-2.0, 1e-9]).with_label(0),
            ],
        )
        .unwrap();
        let truth = Ranking::complete(vec![2, 1]).unwrap();
        let text = candidates_to_string([(&list, Some(&truth))]).unwrap();
        let back = parse_candidates(p(), &text).unwrap();
        assert_eq!(back, vec![Instance { list, truth: Some(truth) }]);
    }

    #[test]
    fn candidate_schema_violation_is_line_numbered() {
        let text = "{\"query_id\":\"q\",\"passages\":[{\"passage_id\":\"a\",\"features\":[1]}]}\n{\"query_id\":\"r\"}\n";
        assert!(matches!(parse_candidates(p(), text), Err(CliError::Parse { line: 2, .. })));
        let unknown = "{\"query_id\":\"q\",\"passages\":[],\"extra\":1}";
        assert!(matches!(parse_candidates(p(), unknown), Err(CliError::Parse { line: 1, .. })));
    }

    #[test]
    fn truth_from_labels_breaks_ties_by_position() {
        let list = CandidateList::new(
            "q",
            ["a", "b", "c"]
                .iter()
                .zip([0, 2, 0])
                .map(|(id, g)| PassageRef::new(*id, vec![0.0]).with_label(g))
                .collect(),
        )
        .unwrap();
        let t = truth_of(&Instance { list, truth: None }).unwrap();
        assert_eq!(t.ranks().unwrap(), vec![2, 1, 3]);
    }

    #[test]
    fn propensity_round_trips() {
        let w = PropensityMatrix::new(2, vec![0.3, 0.2, 0.2, 0.3], 0.01).unwrap();
        let back = parse_propensity(p(), &propensity_to_string(&w)).unwrap();
        assert_eq!(back.clamped(), w.clamped());
        assert!(parse_propensity(p(), "input_position,output_rank,omega\n1,1,0.5\n1,2,0.5\n2,1,0.5\n").is_err());
        assert!(matches!(
            parse_propensity(p(), "input_position,output_rank,omega\n1,1,0\n"),
            Err(CliError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn params_round_trip() {
        let params = ScorerParams::with_position_prior(3, 4, 0.7, 2.0);
        assert_eq!(parse_params(p(), &params_to_string(&params)).unwrap(), params);
        assert!(parse_params(p(), "name,value\nbias_scale,1\ncontent_weights[2],1\n").is_err());
        assert!(matches!(
            parse_params(p(), "name,value\nbias_scale,1\nfoo,1\n"),
            Err(CliError::Parse { line: 3, .. })
        ));
    }
}
