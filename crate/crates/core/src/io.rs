//! On-disk formats: LP export, breaker family files, solver statistics CSV
//! and the aggregated report, plus per-stage seed derivation.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::breakers::{BreakerFamily, DropCounts, ProfileLabel, Provenance, Template};
use crate::model::{IpModel, Relation};
use crate::poly::{Monomial, Polynomial};
use crate::solver::CompareRow;

/// Longest line written to an LP file.
pub const LP_LINE_LIMIT: usize = 250;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("side constraint {index} has degree {degree}; LP export supports at most 2")]
    DegreeTooHigh { index: usize, degree: u32 },
    #[error("objective must be linear for LP export")]
    NonlinearObjective,
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn format_err(path: &Path, message: impl Into<String>) -> IoError {
    IoError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Buffers tokens and breaks lines before they exceed [`LP_LINE_LIMIT`].
/// Continuation lines start with a space.
struct LineWriter<W: Write> {
    out: W,
    col: usize,
}

impl<W: Write> LineWriter<W> {
    fn token(&mut self, tok: &str) -> io::Result<()> {
        if self.col > 0 && self.col + 1 + tok.len() > LP_LINE_LIMIT {
            self.out.write_all(b"\n ")?;
            self.col = 1;
        } else if self.col > 0 {
            self.out.write_all(b" ")?;
            self.col += 1;
        }
        self.out.write_all(tok.as_bytes())?;
        self.col += tok.len();
        Ok(())
    }

    fn end_line(&mut self) -> io::Result<()> {
        self.out.write_all(b"\n")?;
        self.col = 0;
        Ok(())
    }

    fn line(&mut self, text: &str) -> io::Result<()> {
        self.token(text)?;
        self.end_line()
    }
}

fn coeff_tokens(coeff: i64, first: bool, out: &mut Vec<String>) {
    if coeff < 0 {
        out.push("-".into());
    } else if !first {
        out.push("+".into());
    }
    if coeff.unsigned_abs() != 1 {
        out.push(coeff.unsigned_abs().to_string());
    }
}

fn monomial_tokens(model: &IpModel, m: &Monomial, out: &mut Vec<String>) {
    let mut first = true;
    for (v, e) in m.factors() {
        if !first {
            out.push("*".into());
        }
        first = false;
        out.push(model.var_name(v));
        if e > 1 {
            out.push("^".into());
            out.push(e.to_string());
        }
    }
}

/// Tokens of `p` without its constant term: the quadratic part in brackets,
/// then the linear part.
fn expression_tokens(model: &IpModel, p: &Polynomial) -> Vec<String> {
    let mut out = Vec::new();
    let quad: Vec<_> = p.terms().filter(|(m, _)| m.degree() == 2).collect();
    let lin: Vec<_> = p.terms().filter(|(m, _)| m.degree() == 1).collect();
    if !quad.is_empty() {
        out.push("[".into());
        for (i, (m, c)) in quad.iter().enumerate() {
            coeff_tokens(*c, i == 0, &mut out);
            monomial_tokens(model, m, &mut out);
        }
        out.push("]".into());
    }
    for (m, c) in lin {
        coeff_tokens(c, out.is_empty(), &mut out);
        monomial_tokens(model, m, &mut out);
    }
    if out.is_empty() {
        out.push("0".into());
        out.push(model.var_name(0));
    }
    out
}

/// Writes `model` in LP format. Side constraints `p <= 0` become rows
/// `sb_t` with their quadratic part in brackets and the constant moved to
/// the right-hand side.
pub fn write_lp<W: Write>(model: &IpModel, out: W) -> Result<(), IoError> {
    if model.objective().degree().is_some_and(|d| d > 1) {
        return Err(IoError::NonlinearObjective);
    }
    for (index, p) in model.side_constraints().iter().enumerate() {
        if let Some(degree) = p.degree().filter(|&d| d > 2) {
            return Err(IoError::DegreeTooHigh { index, degree });
        }
    }
    let mut w = LineWriter { out, col: 0 };
    w.line("Minimize")?;
    w.token("obj:")?;
    for t in expression_tokens(model, model.objective()) {
        w.token(&t)?;
    }
    let obj_const = model.objective().constant_term();
    if obj_const != 0 {
        w.token(if obj_const < 0 { "-" } else { "+" })?;
        w.token(&obj_const.unsigned_abs().to_string())?;
    }
    w.end_line()?;
    w.line("Subject To")?;
    for c in model.constraints() {
        w.token(&format!("{}:", c.name))?;
        if c.terms.is_empty() {
            w.token("0")?;
            w.token(&model.var_name(0))?;
        }
        for (i, &(v, a)) in c.terms.iter().enumerate() {
            let mut toks = Vec::new();
            coeff_tokens(a, i == 0, &mut toks);
            toks.push(model.var_name(v));
            for t in toks {
                w.token(&t)?;
            }
        }
        w.token(&c.relation.to_string())?;
        w.token(&c.rhs.to_string())?;
        w.end_line()?;
    }
    for (t, p) in model.side_constraints().iter().enumerate() {
        w.token(&format!("sb_{}:", t + 1))?;
        for tok in expression_tokens(model, p) {
            w.token(&tok)?;
        }
        w.token(&Relation::Le.to_string())?;
        w.token(&(-p.constant_term()).to_string())?;
        w.end_line()?;
    }
    let binary: Vec<usize> = (0..model.num_vars())
        .filter(|&i| model.domains()[i].is_binary())
        .collect();
    if binary.len() != model.num_vars() {
        w.line("Bounds")?;
        for (i, d) in model.domains().iter().enumerate() {
            if !d.is_binary() {
                let (lo, hi) = (d.values()[0], d.values()[d.values().len() - 1]);
                w.line(&format!("{lo} <= {} <= {hi}", model.var_name(i)))?;
            }
        }
        w.line("General")?;
        for i in (0..model.num_vars()).filter(|i| !binary.contains(i)) {
            w.token(&model.var_name(i))?;
        }
        w.end_line()?;
    }
    if !binary.is_empty() {
        w.line("Binary")?;
        for i in binary {
            w.token(&model.var_name(i))?;
        }
        w.end_line()?;
    }
    w.line("End")?;
    w.out.flush()?;
    Ok(())
}

/// Streams the LP text of `model` to `path`.
pub fn export_lp(model: &IpModel, path: &Path) -> Result<(), IoError> {
    let file = BufWriter::with_capacity(1 << 20, File::create(path)?);
    write_lp(model, file)
}

/// Metadata written next to a family's `.breakers` file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyManifest {
    pub instance_id: String,
    pub template: Template,
    pub profile: ProfileLabel,
    pub seed: u64,
    pub perm_count: usize,
    pub generator_product_length: usize,
    pub base: String,
    #[serde(flatten)]
    pub counts: DropCounts,
}

impl FamilyManifest {
    pub fn for_family<P>(
        family: &BreakerFamily<P>,
        provenance: &Provenance,
        generator_product_length: usize,
    ) -> Self {
        Self {
            instance_id: provenance.instance_id.clone(),
            template: provenance.template,
            profile: provenance.profile,
            seed: provenance.seed,
            perm_count: family.perms.len(),
            generator_product_length,
            base: family.base.to_string(),
            counts: family.counts,
        }
    }
}

/// A family as stored on disk: the manifest plus its breaker polynomials.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FamilyFile {
    pub manifest: FamilyManifest,
    pub breakers: Vec<Polynomial>,
}

/// Sidecar path holding one canonical polynomial per line.
pub fn breakers_path(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("breakers")
}

/// Writes `<path>` (JSON manifest) and its `.breakers` sidecar.
pub fn write_family(path: &Path, file: &FamilyFile) -> Result<(), IoError> {
    let mut json = serde_json::to_string_pretty(&file.manifest)?;
    json.push('\n');
    std::fs::write(path, json)?;
    let mut out = BufWriter::new(File::create(breakers_path(path))?);
    for p in &file.breakers {
        writeln!(out, "{p}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_family(path: &Path) -> Result<FamilyFile, IoError> {
    let manifest: FamilyManifest = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let side = breakers_path(path);
    let mut breakers = Vec::new();
    for (n, line) in BufReader::new(File::open(&side)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p = line
            .parse()
            .map_err(|e| format_err(&side, format!("line {}: {e}", n + 1)))?;
        breakers.push(p);
    }
    if breakers.len() != manifest.counts.kept {
        return Err(format_err(
            &side,
            format!(
                "{} breakers, manifest says {}",
                breakers.len(),
                manifest.counts.kept
            ),
        ));
    }
    Ok(FamilyFile { manifest, breakers })
}

/// One line of a solver statistics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRecord {
    pub instance_id: String,
    pub config_id: String,
    pub template: Option<String>,
    pub profile: Option<String>,
    pub nodes: u64,
    pub relative_nodes_pct: String,
    pub optimum: Option<i64>,
    pub incumbent_updates: u64,
    pub complete: bool,
}

impl StatsRecord {
    pub fn from_row(instance_id: &str, row: &CompareRow) -> Self {
        Self {
            instance_id: instance_id.to_string(),
            config_id: row.config_id.clone(),
            template: row.template.clone(),
            profile: row.profile.clone(),
            nodes: row.stats.nodes_explored,
            relative_nodes_pct: format!("{:.4}", row.relative_nodes_pct),
            optimum: row.stats.optimum,
            incumbent_updates: row.stats.incumbent_updates,
            complete: row.stats.complete,
        }
    }
}

pub fn write_stats<W: Write>(records: &[StatsRecord], out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_stats(path: &Path) -> Result<Vec<StatsRecord>, IoError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Relative node counts of one template and profile across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub template: String,
    pub profile: String,
    pub runs: usize,
    pub mean_relative_nodes_pct: String,
    pub median_relative_nodes_pct: String,
    pub min_relative_nodes_pct: String,
    pub max_relative_nodes_pct: String,
}

/// Groups non-baseline records by template and profile.
pub fn aggregate(records: &[StatsRecord]) -> Result<Vec<ReportRow>, IoError> {
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for r in records {
        let (Some(t), Some(p)) = (&r.template, &r.profile) else {
            continue;
        };
        let pct: f64 = r.relative_nodes_pct.parse().map_err(|_| {
            format_err(
                Path::new(&r.config_id),
                format!("bad percentage {:?}", r.relative_nodes_pct),
            )
        })?;
        groups.entry((t.clone(), p.clone())).or_default().push(pct);
    }
    Ok(groups
        .into_iter()
        .map(|((template, profile), mut v)| {
            v.sort_by(f64::total_cmp);
            let n = v.len();
            let median = if n % 2 == 1 {
                v[n / 2]
            } else {
                (v[n / 2 - 1] + v[n / 2]) / 2.0
            };
            ReportRow {
                template,
                profile,
                runs: n,
                mean_relative_nodes_pct: format!("{:.4}", v.iter().sum::<f64>() / n as f64),
                median_relative_nodes_pct: format!("{median:.4}"),
                min_relative_nodes_pct: format!("{:.4}", v[0]),
                max_relative_nodes_pct: format!("{:.4}", v[n - 1]),
            }
        })
        .collect())
}

pub fn write_report<W: Write>(rows: &[ReportRow], out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one pipeline stage: `splitmix64(global ^ fnv1a64(stage))`.
pub fn stage_seed(global: u64, stage: &str) -> u64 {
    splitmix64(global ^ fnv1a(stage.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binpack::BinPackingInstance;
    use crate::solver::{compare, Configuration, SolveOptions};

    fn lp_string(model: &IpModel) -> String {
        let mut buf = Vec::new();
        write_lp(model, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn quadratic_breaker_row() {
        // x_1_1 plays x and y_1 plays y in h = 2x + y^2 under their swap.
        let inst = BinPackingInstance::new(10, vec![5], 1).unwrap();
        let model = inst.build_model();
        let l = inst.layout();
        let (x, y) = (Polynomial::var(l.x(0, 0)), Polynomial::var(l.y(0)));
        let g = &(&(&Polynomial::constant(2) * &y) + &(&x * &x))
            - &(&(&Polynomial::constant(2) * &x) + &(&y * &y));
        let text = lp_string(&model.with_side_constraints([&g]).unwrap());
        assert!(
            text.contains("sb_1: [ - y_1 ^ 2 + x_1_1 ^ 2 ] + 2 y_1 - 2 x_1_1 <= 0"),
            "{text}"
        );
        assert!(text.starts_with("Minimize\nobj: y_1\nSubject To\n"));
        assert!(text.contains("cap_1: - 10 y_1 + 5 x_1_1 <= 0"), "{text}");
        assert!(text.contains("assign_1: x_1_1 = 1"));
        assert!(text.ends_with("Binary\ny_1 x_1_1\nEnd\n"));
    }

    #[test]
    fn no_breakers_no_brackets() {
        let inst = BinPackingInstance::new(10, vec![5, 6], 2).unwrap();
        let text = lp_string(&inst.build_model());
        assert!(!text.contains('['));
        assert!(!text.contains("sb_"));
    }

    #[test]
    fn constant_moves_to_rhs_and_cross_terms() {
        let m = IpModel::two_variable_example();
        let p: Polynomial = "+3 x[0]*x[1] -2 x[1] +4".parse().unwrap();
        let text = lp_string(&m.with_side_constraints([&p]).unwrap());
        assert!(
            text.contains("sb_1: [ 3 v_0 * v_1 ] - 2 v_1 <= -4"),
            "{text}"
        );
    }

    #[test]
    fn rejects_cubic() {
        let m = IpModel::two_variable_example();
        let p: Polynomial = "+1 x[0]^3".parse().unwrap();
        let err = write_lp(&m.with_side_constraints([&p]).unwrap(), Vec::new()).unwrap_err();
        assert!(matches!(
            err,
            IoError::DegreeTooHigh {
                index: 0,
                degree: 3
            }
        ));
    }

    #[test]
    fn long_rows_wrap() {
        let inst = BinPackingInstance::new(100, vec![50; 60], 60).unwrap();
        let text = lp_string(&inst.build_model());
        assert!(text.lines().all(|l| l.len() <= LP_LINE_LIMIT));
        assert!(text.lines().any(|l| l.starts_with(' ')));
    }

    #[test]
    fn family_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fam.json");
        let file = FamilyFile {
            manifest: FamilyManifest {
                instance_id: "m2-n2".into(),
                template: Template::XY,
                profile: ProfileLabel::FewFew,
                seed: 7,
                perm_count: 2,
                generator_product_length: 50,
                base: "+1 x[0]*x[1]".into(),
                counts: DropCounts {
                    kept: 2,
                    dropped_zero: 0,
                    dropped_linear: 0,
                    dropped_duplicate: 0,
                },
            },
            breakers: vec![
                "-1 x[0]^2 +2 x[3]".parse().unwrap(),
                "+1 x[1] -1 x[2]".parse().unwrap(),
            ],
        };
        write_family(&path, &file).unwrap();
        assert_eq!(read_family(&path).unwrap(), file);
        let json = std::fs::read_to_string(&path).unwrap();
        assert!(json.contains("\"template\": \"xy\""));
        assert!(json.contains("\"dropped_duplicate\": 0"));
        let lines = std::fs::read_to_string(breakers_path(&path)).unwrap();
        assert_eq!(lines, "-1 x[0]^2 +2 x[3]\n+1 x[1] -1 x[2]\n");
    }

    #[test]
    fn family_count_mismatch_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fam.json");
        let mut file = FamilyFile {
            manifest: FamilyManifest {
                instance_id: "x".into(),
                template: Template::X,
                profile: ProfileLabel::FewFew,
                seed: 0,
                perm_count: 1,
                generator_product_length: 50,
                base: "+1 x[0]".into(),
                counts: DropCounts::default(),
            },
            breakers: vec![],
        };
        file.manifest.counts.kept = 1;
        write_family(&path, &file).unwrap();
        assert!(matches!(read_family(&path), Err(IoError::Format { .. })));
    }

    #[test]
    fn stats_and_report() {
        let toy = IpModel::two_variable_example();
        let cfg = Configuration {
            config_id: "xy-few_few".into(),
            template: Some("xy".into()),
            profile: Some("few_few".into()),
            breakers: vec![&Polynomial::var(1) - &Polynomial::var(0)],
        };
        let rows = compare(&toy, &[cfg], &SolveOptions::default()).unwrap();
        let recs: Vec<_> = rows
            .iter()
            .map(|r| StatsRecord::from_row("toy", r))
            .collect();
        let mut buf = Vec::new();
        write_stats(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "instance_id,config_id,template,profile,nodes,relative_nodes_pct,optimum,incumbent_updates,complete\n"
        ));
        assert!(text.contains("toy,baseline,,,"));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        std::fs::write(&path, &text).unwrap();
        let back = read_stats(&path).unwrap();
        assert_eq!(back, recs);

        let mut more = back.clone();
        more[1].relative_nodes_pct = "50.0000".into();
        more.extend(back.clone());
        let rep = aggregate(&more).unwrap();
        assert_eq!(rep.len(), 1);
        assert_eq!(rep[0].runs, 2);
        assert_eq!(rep[0].template, "xy");
        assert_eq!(rep[0].min_relative_nodes_pct, "50.0000");
    }

    #[test]
    fn aggregate_median() {
        let rec = |pct: &str| StatsRecord {
            instance_id: "i".into(),
            config_id: "c".into(),
            template: Some("x".into()),
            profile: Some("few_few".into()),
            nodes: 1,
            relative_nodes_pct: pct.into(),
            optimum: Some(1),
            incumbent_updates: 1,
            complete: true,
        };
        let rep = aggregate(&[rec("10"), rec("30"), rec("20"), rec("100")]).unwrap();
        assert_eq!(rep[0].median_relative_nodes_pct, "25.0000");
        assert_eq!(rep[0].mean_relative_nodes_pct, "40.0000");
    }

    #[test]
    fn stage_seeds() {
        assert_eq!(stage_seed(1, "bench"), stage_seed(1, "bench"));
        assert_ne!(stage_seed(1, "bench"), stage_seed(1, "breakers"));
        assert_ne!(stage_seed(1, "bench"), stage_seed(2, "bench"));
        // splitmix64 reference output for state 0
        assert_eq!(splitmix64(0), 0xe220_a839_7b1d_cdaf);
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
    }
}
