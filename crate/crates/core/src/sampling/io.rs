//! CSV bodies for datasets and test sets. Metadata (seeds, network hash,
//! policy) travels separately as JSON via serde on [`Dataset`] / [`TestSet`].

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::{Dataset, TestCase, TestSet};
use crate::bn::{Assignment, BayesianNetwork, Evidence};
use crate::error::{Error, Result};
use crate::exact::PosteriorMarginals;

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// One column per variable holding state indices.
pub fn write_dataset_csv<W: Write>(network: &BayesianNetwork, dataset: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(network.variables.iter().map(|v| v.name.as_str())).map_err(csv_err)?;
    for a in &dataset.samples {
        w.write_record(a.0.iter().map(|s| s.to_string())).map_err(csv_err)?;
    }
    w.flush().map_err(|e| bad(e.to_string()))
}

pub fn read_dataset_csv<R: Read>(network: &BayesianNetwork, input: R) -> Result<Vec<Assignment>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    let names: Vec<&str> = network.variables.iter().map(|v| v.name.as_str()).collect();
    if header.iter().collect::<Vec<_>>() != names {
        return Err(bad("training CSV header does not match the network"));
    }
    let cards = network.cardinalities();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let values = rec
            .iter()
            .zip(&cards)
            .map(|(f, &k)| match f.parse::<usize>() {
                Ok(s) if s < k => Ok(s),
                _ => Err(bad(format!("bad state index `{f}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(Assignment(values));
    }
    Ok(out)
}

fn truth_headers(network: &BayesianNetwork) -> Vec<String> {
    network
        .variables
        .iter()
        .flat_map(|v| v.states.iter().map(move |s| format!("p_{}_{}", v.name, s)))
        .collect()
}

/// Evidence columns (state index, empty when unobserved) followed by the
/// flattened posterior vectors (empty for observed variables).
pub fn write_testset_csv<W: Write>(network: &BayesianNetwork, testset: &TestSet, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = network.variables.iter().map(|v| v.name.clone()).collect();
    header.extend(truth_headers(network));
    w.write_record(&header).map_err(csv_err)?;
    for case in &testset.cases {
        let mut row: Vec<String> = (0..network.len())
            .map(|v| case.evidence.get(v).map(|s| s.to_string()).unwrap_or_default())
            .collect();
        for v in 0..network.len() {
            match case.truth.get(v) {
                Some(p) => row.extend(p.iter().map(|x| x.to_string())),
                None => row.extend(std::iter::repeat_n(String::new(), network.cardinality(v))),
            }
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| bad(e.to_string()))
}

pub fn read_testset_csv<R: Read>(network: &BayesianNetwork, input: R) -> Result<Vec<TestCase>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    let mut want: Vec<String> = network.variables.iter().map(|v| v.name.clone()).collect();
    want.extend(truth_headers(network));
    if header.iter().collect::<Vec<_>>() != want.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(bad("test CSV header does not match the network"));
    }
    let m = network.len();
    let cards = network.cardinalities();
    let mut cases = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let fields: Vec<&str> = rec.iter().collect();
        let mut evidence = Evidence::empty();
        for v in 0..m {
            if !fields[v].is_empty() {
                let s: usize = fields[v].parse().map_err(|_| bad(format!("bad evidence `{}`", fields[v])))?;
                evidence.0.insert(v, s);
            }
        }
        evidence.check(network)?;
        let mut marginals = BTreeMap::new();
        let mut col = m;
        for v in 0..m {
            let slice = &fields[col..col + cards[v]];
            col += cards[v];
            if evidence.is_observed(v) {
                continue;
            }
            let p = slice
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| bad(format!("bad probability `{f}`"))))
                .collect::<Result<Vec<_>>>()?;
            marginals.insert(v, p);
        }
        cases.push(TestCase {
            truth: PosteriorMarginals { evidence: evidence.clone(), marginals },
            evidence,
        });
    }
    Ok(cases)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{build_test_set, build_training_set, synth_markov_border, EvidencePolicy, SamplerKind, SynthKind, VeOracle};

    #[test]
    fn dataset_and_testset_round_trip() {
        let p = synth_markov_border(SynthKind::B, 1);
        let ds = build_training_set(&p.network, 50, SamplerKind::Ancestral, 2).unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&p.network, &ds, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("T,U,C\n"));
        assert_eq!(read_dataset_csv(&p.network, buf.as_slice()).unwrap(), ds.samples);

        let ts = build_test_set(&p.network, 100, 3, &EvidencePolicy::UniformCount, None, &VeOracle).unwrap();
        let mut buf = Vec::new();
        write_testset_csv(&p.network, &ts, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("T,U,C,p_T_0,p_T_1,p_U_0,p_U_1,p_C_0,p_C_1\n"));
        assert_eq!(read_testset_csv(&p.network, buf.as_slice()).unwrap(), ts.cases);
    }

    #[test]
    fn header_mismatch_rejected() {
        let p = synth_markov_border(SynthKind::A, 1);
        assert!(read_dataset_csv(&p.network, "X,Y\n0,1\n".as_bytes()).is_err());
        assert!(read_dataset_csv(&p.network, "P,T\n0,2\n".as_bytes()).is_err());
    }
}
