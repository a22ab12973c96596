//! Key rate versus distance for the five analysis modes, with CSV and SVG
//! output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoy::{shield_block_spec, ShieldBlocks};
use crate::definetti::{effective_x, log2_g_for_penalty, BlockSpec};
use crate::entropy::{min_entropy_lower_bound, EntropyOptions};
use crate::error::{Error, Result};
use crate::finite_size::{
    b_stat, hoeffding_mu_log2, leak_bits, renyi_alpha_log2, theta_log2, variable_key_length, variable_lift_with_log2_g,
    ProtocolCounts, SecurityBudget,
};
use crate::protocol::{protocol_block_spec, sequential_n, ThreeStateConfig, ThreeStateModel, N_OUTCOMES, N_SIGNALS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Iid,
    SequentialIid,
    PsBlock,
    PsGeneric,
    PsDecoy,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Iid,
        Mode::SequentialIid,
        Mode::PsBlock,
        Mode::PsGeneric,
        Mode::PsDecoy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Iid => "iid",
            Mode::SequentialIid => "sequential_iid",
            Mode::PsBlock => "ps_block",
            Mode::PsGeneric => "ps_generic",
            Mode::PsDecoy => "ps_decoy",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown mode '{s}'")))
    }

    /// Block structure behind the de Finetti factor, if the mode is lifted.
    pub fn block_spec(self) -> Result<Option<BlockSpec>> {
        Ok(match self {
            Mode::Iid | Mode::SequentialIid => None,
            Mode::PsBlock => Some(protocol_block_spec()?),
            Mode::PsGeneric => Some(BlockSpec::single(2, 11)?),
            Mode::PsDecoy => Some(shield_block_spec(
                &ShieldBlocks {
                    n_int: 3,
                    cutoff_n: 8,
                    d_a: 3,
                },
                vec![(2, 1), (1, 9)],
            )?),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iter: usize,
    pub target_gap: f64,
    pub relative_gap: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iter: 300,
            target_gap: 1e-7,
            relative_gap: 1e-5,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub csv: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub protocol: ThreeStateConfig,
    pub modes: Vec<Mode>,
    pub distances_km: Vec<f64>,
    pub eps_target_sec: f64,
    pub eps_target_cor: f64,
    pub f_ec: f64,
    pub seed: u64,
    pub solver: SolverConfig,
    pub output: OutputConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            protocol: ThreeStateConfig::default(),
            modes: Mode::ALL.to_vec(),
            distances_km: (0..20).map(|i| i as f64 * 10.0).collect(),
            eps_target_sec: 1e-12,
            eps_target_cor: 1e-12,
            f_ec: 1.16,
            seed: 0,
            solver: SolverConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SweepSection {
    modes: Vec<String>,
    distances_km: Vec<f64>,
    eps_target_sec: f64,
    eps_target_cor: f64,
    f_ec: f64,
    seed: u64,
}

impl Default for SweepSection {
    fn default() -> Self {
        let d = SweepConfig::default();
        Self {
            modes: d.modes.iter().map(|m| m.as_str().to_string()).collect(),
            distances_km: d.distances_km,
            eps_target_sec: d.eps_target_sec,
            eps_target_cor: d.eps_target_cor,
            f_ec: d.f_ec,
            seed: d.seed,
        }
    }
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    sweep: SweepSection,
    protocol: ThreeStateConfig,
    solver: SolverConfig,
    output: OutputConfig,
}

impl SweepConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let f: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let modes = f
            .sweep
            .modes
            .iter()
            .map(|m| Mode::parse(m))
            .collect::<Result<Vec<_>>>()?;
        let cfg = Self {
            protocol: f.protocol,
            modes,
            distances_km: f.sweep.distances_km,
            eps_target_sec: f.sweep.eps_target_sec,
            eps_target_cor: f.sweep.eps_target_cor,
            f_ec: f.sweep.f_ec,
            seed: f.sweep.seed,
            solver: f.solver,
            output: f.output,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.protocol.validate()?;
        if self.modes.is_empty() {
            return Err(Error::Config("at least one mode is required".into()));
        }
        if self.distances_km.is_empty() {
            return Err(Error::Config("at least one distance is required".into()));
        }
        for &d in &self.distances_km {
            if !(d >= 0.0) || !d.is_finite() {
                return Err(Error::Config(format!("distance {d} must be finite and ≥ 0")));
            }
        }
        for (name, v) in [
            ("eps_target_sec", self.eps_target_sec),
            ("eps_target_cor", self.eps_target_cor),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} = {v} must lie in (0,1)")));
            }
        }
        if !(self.f_ec >= 1.0) || !self.f_ec.is_finite() {
            return Err(Error::Config(format!("f_ec = {} must be ≥ 1", self.f_ec)));
        }
        if self.solver.max_iter == 0 {
            return Err(Error::Config("solver.max_iter must be positive".into()));
        }
        Ok(())
    }

    fn entropy_options(&self) -> EntropyOptions {
        EntropyOptions {
            max_iter: self.solver.max_iter,
            target_gap: self.solver.target_gap,
            relative_gap: self.solver.relative_gap,
            ..EntropyOptions::default()
        }
    }
}

/// One `(distance, mode)` result; field order is the CSV column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub distance_km: f64,
    pub mode: Mode,
    pub n_used: f64,
    pub x_used: u64,
    pub log2_g: f64,
    pub entropy_lb_bits_per_round: f64,
    pub b_stat: f64,
    pub leak: f64,
    pub theta: f64,
    pub key_length_bits: f64,
    pub key_rate_per_second: f64,
    pub secrecy_eps: f64,
    pub status: String,
}

/// Scalars fixed by a mode before any entropy computation.
#[derive(Clone, Debug)]
struct ModePlan {
    mode: Mode,
    counts: ProtocolCounts,
    budget: SecurityBudget,
    x: u64,
    mu: f64,
}

fn plan(cfg: &SweepConfig, mode: Mode, d: f64) -> Result<ModePlan> {
    let proto = cfg.protocol.with_distance(d);
    let n = match mode {
        Mode::SequentialIid => sequential_n(&proto),
        _ => proto.unconstrained_n(),
    };
    let counts = ProtocolCounts::from_fraction(n, proto.test_fraction, 2)?;
    let (budget, x) = match mode.block_spec()? {
        None => (SecurityBudget::iid(cfg.eps_target_sec, cfg.eps_target_cor)?, 0),
        Some(spec) => {
            let x = effective_x(&spec);
            let (log2_g, _) = log2_g_for_penalty(counts.n, x);
            (
                SecurityBudget::postselected(cfg.eps_target_sec, cfg.eps_target_cor, log2_g)?,
                x,
            )
        }
    };
    let mu = hoeffding_mu_log2(counts.m, N_SIGNALS * N_OUTCOMES, budget.log2_eps_at());
    Ok(ModePlan {
        mode,
        counts,
        budget,
        x,
        mu,
    })
}

fn error_row(d: f64, mode: Mode, e: &Error) -> SweepRow {
    SweepRow {
        distance_km: d,
        mode,
        n_used: f64::NAN,
        x_used: 0,
        log2_g: f64::NAN,
        entropy_lb_bits_per_round: f64::NAN,
        b_stat: f64::NAN,
        leak: f64::NAN,
        theta: f64::NAN,
        key_length_bits: 0.0,
        key_rate_per_second: 0.0,
        secrecy_eps: f64::NAN,
        status: format!("error:{}", e.kind()),
    }
}

/// All requested modes at one distance.
///
/// Modes share the honest statistics and differ only in `μ`, so their
/// constraint sets are nested; each mode's entropy bound is raised to the best
/// bound among modes with a larger `μ`.
fn rows_at_distance(cfg: &SweepConfig, d: f64) -> Vec<SweepRow> {
    let model = match ThreeStateModel::new(&cfg.protocol.with_distance(d)) {
        Ok(m) => m,
        Err(e) => return cfg.modes.iter().map(|&m| error_row(d, m, &e)).collect(),
    };
    let opts = cfg.entropy_options();
    let plans: Vec<Result<ModePlan>> = cfg.modes.iter().map(|&m| plan(cfg, m, d)).collect();
    let mut order: Vec<usize> = (0..plans.len()).filter(|&i| plans[i].is_ok()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (plans[a].as_ref().unwrap(), plans[b].as_ref().unwrap());
        pb.mu.total_cmp(&pa.mu)
    });
    let mut bounds: Vec<Option<Result<f64>>> = (0..plans.len()).map(|_| None).collect();
    let mut carried = f64::NEG_INFINITY;
    let mut last_mu: Option<(f64, f64)> = None;
    for &i in &order {
        let p = plans[i].as_ref().unwrap();
        let own = match last_mu {
            Some((mu, v)) if mu == p.mu => Ok(v),
            _ => model
                .constraint_set(p.mu)
                .and_then(|cs| min_entropy_lower_bound(&cs, &model.keymap, &opts))
                .map(|b| b.lower_bound),
        };
        if let Ok(v) = own {
            last_mu = Some((p.mu, v));
            carried = carried.max(v);
            bounds[i] = Some(Ok(carried));
        } else {
            bounds[i] = Some(own);
        }
    }
    cfg.modes
        .iter()
        .enumerate()
        .map(|(i, &mode)| {
            let p = match &plans[i] {
                Ok(p) => p,
                Err(e) => return error_row(d, mode, e),
            };
            match bounds[i].take().expect("every planned mode has a bound") {
                Ok(h) => finish_row(cfg, &model, p, d, h),
                Err(e) => error_row(d, mode, &e),
            }
        })
        .collect()
}

fn finish_row(cfg: &SweepConfig, model: &ThreeStateModel, p: &ModePlan, d: f64, h: f64) -> SweepRow {
    let b = &p.budget;
    let alpha = renyi_alpha_log2(p.counts.n_k, b.log2_eps_pa(), p.counts.d_z);
    let th = theta_log2(b.log2_eps_pa(), b.log2_eps_ev(), alpha);
    let bs = b_stat(h, &p.counts, alpha);
    let leak = leak_bits(&model.stats.kept_table, &p.counts, cfg.f_ec);
    let l = variable_key_length(bs, leak, th);
    let (length, secrecy) = if p.x == 0 {
        (l, cfg.eps_target_sec)
    } else {
        let r = variable_lift_with_log2_g(l, b.log2_g(), p.x, cfg.eps_target_sec);
        (r.length_bits, r.secrecy_eps)
    };
    SweepRow {
        distance_km: d,
        mode: p.mode,
        n_used: p.counts.n,
        x_used: p.x,
        log2_g: b.log2_g(),
        entropy_lb_bits_per_round: h,
        b_stat: bs,
        leak,
        theta: th,
        key_length_bits: length,
        key_rate_per_second: length / cfg.protocol.duration_s,
        secrecy_eps: secrecy,
        status: "ok".into(),
    }
}

/// Evaluates every `(distance, mode)` pair; rows come out distance-major in
/// the configured order. The pipeline is deterministic, so the seed only
/// identifies the run.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let per_distance: Vec<Vec<SweepRow>> = cfg.distances_km.par_iter().map(|&d| rows_at_distance(cfg, d)).collect();
    Ok(per_distance.into_iter().flatten().collect())
}

pub fn emit_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no rows to write".into()));
    }
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

const COLORS: [&str; 5] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"];

/// Log-scale line plot of key rate against distance as a standalone SVG.
pub fn render_svg(rows: &[SweepRow]) -> String {
    let (w, h) = (720.0, 480.0);
    let (left, right, top, bottom) = (80.0, 170.0, 30.0, 60.0);
    let pw = w - left - right;
    let ph = h - top - bottom;

    let positive: Vec<&SweepRow> = rows
        .iter()
        .filter(|r| r.key_rate_per_second > 0.0 && r.key_rate_per_second.is_finite())
        .collect();
    let dmax = rows.iter().map(|r| r.distance_km).fold(0.0, f64::max).max(1.0);
    let (mut lo, mut hi) = positive.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        let v = r.key_rate_per_second.log10();
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    let (ylo, yhi) = (lo.floor(), hi.ceil().max(lo.floor() + 1.0));
    let sx = |d: f64| left + pw * d / dmax;
    let sy = |v: f64| top + ph * (1.0 - (v.log10() - ylo) / (yhi - ylo));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for e in (ylo as i64)..=(yhi as i64) {
        let y = sy(10f64.powi(e as i32));
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            left + pw
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">1e{e}</text>"#,
            left - 6.0,
            y + 4.0
        );
    }
    for k in 0..=5 {
        let d = dmax * k as f64 / 5.0;
        let x = sx(d);
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" font-size="11" text-anchor="middle">{d:.0}</text>"#,
            top + ph + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">distance (km)</text>"#,
        left + pw / 2.0,
        h - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" font-size="13" text-anchor="middle" transform="rotate(-90 18 {:.2})">key rate (bit/s)</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );

    let mut legend_y = top + 10.0;
    for (mi, mode) in Mode::ALL.iter().enumerate() {
        let mut pts: Vec<&SweepRow> = positive.iter().copied().filter(|r| r.mode == *mode).collect();
        if pts.is_empty() {
            continue;
        }
        pts.sort_by(|a, b| a.distance_km.total_cmp(&b.distance_km));
        let coords: Vec<String> = pts
            .iter()
            .map(|r| format!("{:.2},{:.2}", sx(r.distance_km), sy(r.key_rate_per_second)))
            .collect();
        let color = COLORS[mi % COLORS.len()];
        let _ = writeln!(
            s,
            r#"<polyline data-mode="{}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            mode.as_str(),
            coords.join(" ")
        );
        let lx = left + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{legend_y:.2}" x2="{:.2}" y2="{legend_y:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="12">{}</text>"#,
            lx + 26.0,
            legend_y + 4.0,
            mode.as_str()
        );
        legend_y += 18.0;
    }
    s.push_str("</svg>\n");
    s
}

pub fn emit_svg(rows: &[SweepRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no rows to plot".into()));
    }
    std::fs::write(path, render_svg(rows)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
