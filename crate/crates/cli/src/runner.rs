use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use bridgestab_core::diagnostics::{
    corrector_check, cost_stability_check, plan_stability_check, quadratic_eot_stability_check, EotCheckOptions,
};
use bridgestab_core::dynamics::{
    dynamic_cost_check, gradient_convergence_experiment, gronwall_curve, gronwall_decay_check, interpolate,
    small_time_cost_curve,
};
use bridgestab_core::families::{random_smooth_pair, rng};
use bridgestab_core::io::{fmt_f64, write_solution, write_table};
use bridgestab_core::orlicz::{all_bounds, luxemburg_norm, OrliczContext};
use bridgestab_core::schrodinger::reference_problem;
use bridgestab_core::sobolev::w2_h_minus_one_comparison;
use bridgestab_core::{
    solve, DiscreteMeasure, Error, GibbsKernel, Grid, InequalityReport, Perturbation, ReferenceMeasure,
    SchrodingerSolution, SobolevContext, Tolerance, Young,
};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Scenario};

/// Exit status classes for failures that stop a run.
#[derive(Debug)]
pub enum RunError {
    /// Inputs the core rejects.
    Input(String),
    /// Non-convergence or a violated numerical precondition.
    Numerical(String),
}

impl RunError {
    fn from_core(context: &str, e: Error) -> Self {
        let msg = format!("{context}: {e}");
        match e {
            Error::InvalidParameter { .. }
            | Error::InvalidGrid(_)
            | Error::InvalidMeasure(_)
            | Error::GridMismatch(_)
            | Error::Unsupported(_)
            | Error::Io(_)
            | Error::Parse(_) => RunError::Input(msg),
            _ => RunError::Numerical(msg),
        }
    }

    pub fn message(&self) -> &str {
        match self {
            RunError::Input(m) | RunError::Numerical(m) => m,
        }
    }
}

type Run<T> = Result<T, RunError>;

trait Context<T> {
    fn ctx(self, what: &str) -> Run<T>;
}

impl<T> Context<T> for bridgestab_core::Result<T> {
    fn ctx(self, what: &str) -> Run<T> {
        self.map_err(|e| RunError::from_core(what, e))
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::Input(format!("{}: {e}", path.display()))
}

/// A CSV written by the run, described on one line of `report.jsonl`.
#[derive(Clone, Debug)]
pub struct TableInfo {
    pub name: String,
    pub file: String,
    pub rows: usize,
    pub flags: BTreeMap<String, Value>,
}

#[derive(Debug, Default)]
pub struct RunOutput {
    pub reports: Vec<InequalityReport>,
    pub tables: Vec<TableInfo>,
    pub artifacts: Vec<String>,
}

pub struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    out: &'a Path,
    grid: Option<Grid>,
    seed: u64,
}

/// Labelled marginal pair.
struct Pair {
    label: String,
    mu: DiscreteMeasure,
    nu: Option<DiscreteMeasure>,
}

struct Variant {
    label: String,
    seed: Option<u64>,
    mu: DiscreteMeasure,
    nu: Option<DiscreteMeasure>,
}

fn mix(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(seed, |acc, p| acc.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(p + 1))
}

impl<'a> Runner<'a> {
    pub fn new(cfg: &'a ExperimentConfig, out: &'a Path) -> Run<Self> {
        let grid = match &cfg.grid {
            Some(g) => Some(g.build().ctx("grid")?),
            None => None,
        };
        Ok(Runner { cfg, out, grid, seed: cfg.seed.unwrap_or(0) })
    }

    pub fn run(&self) -> Run<RunOutput> {
        let mut out = match self.cfg.scenario {
            Scenario::Solve => self.solve_scenario()?,
            Scenario::Stability => self.stability(false)?,
            Scenario::CostStability => self.stability(true)?,
            Scenario::EotStability => self.eot()?,
            Scenario::Corrector => self.corrector()?,
            Scenario::Smalltime => self.smalltime()?,
            Scenario::GradientMap => self.gradient()?,
            Scenario::Interpolate => self.interpolate()?,
            Scenario::Sobolev => self.sobolev()?,
            Scenario::Orlicz => self.orlicz()?,
        };
        if let Some(s) = self.cfg.seed {
            out.reports = out.reports.into_iter().map(|r| r.with_seed(s)).collect();
        }
        Ok(out)
    }

    fn grid(&self) -> &Grid {
        self.grid.as_ref().expect("validated config has a grid")
    }

    fn tol(&self) -> Tolerance {
        self.cfg.tolerance.get()
    }

    fn kappa(&self) -> f64 {
        self.cfg.kernel.curvature()
    }

    fn pairs(&self) -> Run<Vec<Pair>> {
        let g = self.grid();
        if let Some(n) = self.cfg.battery.random_pairs {
            return (0..n as u64)
                .map(|i| {
                    let (mu, nu) = random_smooth_pair(g, mix(self.seed, &[i])).ctx("random pair")?;
                    Ok(Pair { label: format!("pair{i}"), mu, nu: Some(nu) })
                })
                .collect();
        }
        let mu = self.cfg.mu.as_ref().expect("validated").build(g).ctx("mu")?;
        let nu = match &self.cfg.nu {
            Some(f) => Some(f.build(g).ctx("nu")?),
            None => None,
        };
        Ok(vec![Pair { label: "pair".into(), mu, nu }])
    }

    /// The barred marginals for one pair.
    fn variants(&self, pair_index: usize, p: &Pair) -> Run<Vec<Variant>> {
        let c = self.cfg;
        let g = self.grid();
        let explicit = c.mu_bar.is_some() || c.nu_bar.is_some() || c.perturb_mu.is_some() || c.perturb_nu.is_some();
        if explicit {
            let pick = |fam: &Option<bridgestab_core::Family>,
                        pert: &Option<Perturbation>,
                        base: &DiscreteMeasure|
             -> Run<_> {
                let m = match fam {
                    Some(f) => f.build(g).ctx("barred marginal")?,
                    None => base.clone(),
                };
                match pert {
                    Some(pt) => pt.apply(&m).ctx("perturbation"),
                    None => Ok(m),
                }
            };
            let mu = pick(&c.mu_bar, &c.perturb_mu, &p.mu)?;
            let nu = match &p.nu {
                Some(nu) => Some(pick(&c.nu_bar, &c.perturb_nu, nu)?),
                None => None,
            };
            return Ok(vec![Variant { label: "explicit".into(), seed: None, mu, nu }]);
        }
        let per = c.battery.seeds_per_amplitude.unwrap_or(1);
        let mut out = Vec::new();
        for (ai, &s) in c.battery.amplitudes.iter().enumerate() {
            for k in 0..per {
                let seed = mix(self.seed, &[pair_index as u64, 1000 + ai as u64, k as u64]);
                let mut r = rng(seed);
                let h = Perturbation::random(s, &mut r);
                let kk = Perturbation::random(s, &mut r);
                let mu = h.apply(&p.mu).ctx("perturbation")?;
                let nu = match &p.nu {
                    Some(nu) => Some(kk.apply(nu).ctx("perturbation")?),
                    None => None,
                };
                out.push(Variant { label: format!("s={s:?}#{k}"), seed: Some(seed), mu, nu });
            }
        }
        Ok(out)
    }

    fn reference(&self, time: f64) -> Run<(Arc<GibbsKernel>, Arc<ReferenceMeasure>)> {
        reference_problem(self.grid(), time, self.kappa()).ctx("kernel")
    }

    fn solved(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure, time: f64, what: &str) -> Run<SchrodingerSolution> {
        let (k, r) = self.reference(time)?;
        let s = solve(mu, nu, &k, &r, &self.cfg.solver.options()).ctx(what)?;
        s.require_converged().ctx(what)?;
        Ok(s)
    }

    fn single_time(&self) -> f64 {
        self.cfg.kernel.time_list()[0]
    }

    fn metadata(&self) -> Vec<(String, String)> {
        let c = self.cfg;
        let mut m = vec![("scenario".to_string(), c.scenario.name().to_string())];
        if let Some(g) = &c.grid {
            m.push(("grid".into(), g.describe()));
        }
        if c.scenario != Scenario::Orlicz && c.scenario != Scenario::Sobolev {
            m.push(("kappa".into(), fmt_f64(self.kappa())));
        }
        m.push(("solver_tol".into(), fmt_f64(c.solver.tol)));
        m.push(("tol_abs".into(), fmt_f64(c.tolerance.abs)));
        m.push(("tol_rel".into(), fmt_f64(c.tolerance.rel)));
        m.push(("seed".into(), c.seed.map_or("none".into(), |s| s.to_string())));
        m.push(("config_digest".into(), c.digest()));
        m
    }

    fn table(
        &self,
        name: &str,
        header: &[&str],
        rows: Vec<Vec<String>>,
        flags: BTreeMap<String, Value>,
    ) -> Run<TableInfo> {
        let file = format!("{name}.csv");
        let path = self.out.join(&file);
        let f = File::create(&path).map_err(|e| io_err(&path, e))?;
        write_table(BufWriter::new(f), &self.metadata(), header, &rows).ctx(&file)?;
        Ok(TableInfo { name: name.into(), file, rows: rows.len(), flags })
    }

    fn label(r: &mut InequalityReport, item: &str) {
        r.set_digest_part("item", item);
    }

    fn solve_scenario(&self) -> Run<RunOutput> {
        let t = self.single_time();
        let pairs = self.pairs()?;
        let mut out = RunOutput::default();
        for (i, p) in pairs.iter().enumerate() {
            let nu = p.nu.as_ref().expect("validated");
            let (k, r) = self.reference(t)?;
            let s = solve(&p.mu, nu, &k, &r, &self.cfg.solver.options()).ctx(&p.label)?;
            let stem = if pairs.len() == 1 { "solution".to_string() } else { format!("solution_{i}") };
            let files = write_solution(&s, self.out, &stem).ctx(&stem)?;
            for f in [&files.metadata, &files.phi, &files.psi] {
                out.artifacts.push(file_name(f));
            }
            if self.cfg.output.plan {
                let path = self.out.join(format!("{stem}_plan.csv"));
                let f = File::create(&path).map_err(|e| io_err(&path, e))?;
                s.plan().write_csv(BufWriter::new(f)).ctx("plan")?;
                out.artifacts.push(file_name(&path));
            }
            let mut rep = InequalityReport::evaluate(
                "marginal_residual",
                s.marginal_residual(),
                s.tol(),
                Tolerance { abs: 0.0, rel: 0.0 },
            );
            rep.set_term("iterations", s.iterations() as f64);
            rep.set_term("ct", s.schrodinger_cost());
            rep.set_term("st", s.entropic_cost());
            rep.digest_measures(&[s.mu(), s.nu()]);
            Self::label(&mut rep, &p.label);
            out.reports.push(rep);
            s.require_converged().ctx(&p.label)?;
        }
        Ok(out)
    }

    fn stability(&self, cost: bool) -> Run<RunOutput> {
        let t = self.single_time();
        let ctx = SobolevContext { cg_tol: self.cfg.solver.cg_tol, tol: self.tol() };
        let pairs = self.pairs()?;
        let mut jobs = Vec::new();
        for (i, p) in pairs.iter().enumerate() {
            for v in self.variants(i, p)? {
                jobs.push((i, v));
            }
        }
        let bases: Vec<SchrodingerSolution> = pairs
            .par_iter()
            .map(|p| self.solved(&p.mu, p.nu.as_ref().expect("validated"), t, &p.label))
            .collect::<Run<_>>()?;
        let per_job: Vec<Vec<InequalityReport>> = jobs
            .par_iter()
            .map(|(i, v)| {
                let label = format!("{}/{}", pairs[*i].label, v.label);
                let b = self.solved(&v.mu, v.nu.as_ref().expect("validated"), t, &label)?;
                let mut reps = if cost {
                    cost_stability_check(&bases[*i], &b, &ctx).ctx(&label)?
                } else {
                    let (a, f) = plan_stability_check(&bases[*i], &b, &ctx).ctx(&label)?;
                    vec![a, f]
                };
                for r in &mut reps {
                    Self::label(r, &label);
                    if let Some(s) = v.seed {
                        r.set_digest_part("wave_seed", &s.to_string());
                    }
                }
                Ok(reps)
            })
            .collect::<Run<_>>()?;
        Ok(RunOutput { reports: per_job.into_iter().flatten().collect(), ..Default::default() })
    }

    fn eot(&self) -> Run<RunOutput> {
        let eps = self.cfg.kernel.epsilons.clone().expect("validated");
        let opts = EotCheckOptions {
            solve: self.cfg.solver.options(),
            cg_tol: self.cfg.solver.cg_tol,
            kappa: self.cfg.kernel.kappa,
            tol: self.tol(),
        };
        let pairs = self.pairs()?;
        let mut jobs = Vec::new();
        for (i, p) in pairs.iter().enumerate() {
            for v in self.variants(i, p)? {
                for &e in &eps {
                    jobs.push((i, v.label.clone(), v.mu.clone(), v.nu.clone(), e));
                }
            }
        }
        let per_job: Vec<(String, f64, Vec<InequalityReport>)> = jobs
            .par_iter()
            .map(|(i, vl, mb, nb, e)| {
                let p = &pairs[*i];
                let label = format!("{}/{}/eps={e:?}", p.label, vl);
                let nu = p.nu.as_ref().expect("validated");
                let mut reps =
                    quadratic_eot_stability_check((&p.mu, nu), (mb, nb.as_ref().expect("validated")), *e, &opts)
                        .ctx(&label)?;
                for r in &mut reps {
                    Self::label(r, &label);
                }
                Ok((format!("{}/{}", p.label, vl), *e, reps))
            })
            .collect::<Run<_>>()?;
        let mut rows = Vec::new();
        let mut out = RunOutput::default();
        for (item, e, reps) in per_job {
            for r in &reps {
                rows.push(vec![
                    item.clone(),
                    fmt_f64(e),
                    r.name.clone(),
                    fmt_f64(r.lhs),
                    fmt_f64(r.rhs),
                    fmt_f64(r.relative_slack),
                    r.term("limit_rhs").map_or(String::new(), fmt_f64),
                ]);
            }
            out.reports.extend(reps);
        }
        let header = ["item", "epsilon", "name", "lhs", "rhs", "relative_slack", "limit_rhs"];
        out.tables.push(self.table("eot_stability", &header, rows, BTreeMap::new())?);
        Ok(out)
    }

    fn corrector(&self) -> Run<RunOutput> {
        let pairs = self.pairs()?;
        let times = self.cfg.kernel.time_list();
        let jobs: Vec<(usize, f64)> = (0..pairs.len()).flat_map(|i| times.iter().map(move |&t| (i, t))).collect();
        let reps: Vec<Vec<InequalityReport>> = jobs
            .par_iter()
            .map(|&(i, t)| {
                let p = &pairs[i];
                let label = format!("{}/T={t:?}", p.label);
                let s = self.solved(&p.mu, p.nu.as_ref().expect("validated"), t, &label)?;
                let (a, b) = corrector_check(&s, self.kappa()).ctx(&label)?;
                let mut v = vec![a, b];
                for r in &mut v {
                    Self::label(r, &label);
                }
                Ok(v)
            })
            .collect::<Run<_>>()?;
        Ok(RunOutput { reports: reps.into_iter().flatten().collect(), ..Default::default() })
    }

    fn smalltime(&self) -> Run<RunOutput> {
        let pairs = self.pairs()?;
        let mut out = RunOutput::default();
        for (i, p) in pairs.iter().enumerate() {
            let nu = p.nu.as_ref().expect("validated");
            let times = self.cfg.kernel.time_list();
            let tab =
                small_time_cost_curve(&p.mu, nu, &times, self.kappa(), &self.cfg.solver.options()).ctx(&p.label)?;
            if let Some(r) = tab.rows.iter().find(|r| !r.converged) {
                return Err(RunError::Numerical(format!("{}: solve at T = {:?} did not converge", p.label, r.time)));
            }
            let rows = tab
                .rows
                .iter()
                .map(|r| {
                    vec![
                        fmt_f64(r.time),
                        fmt_f64(r.scaled_cost),
                        fmt_f64(r.target),
                        fmt_f64(r.gap),
                        fmt_f64(r.relative_gap),
                        r.bandwidth_ok.to_string(),
                        r.iterations.to_string(),
                    ]
                })
                .collect();
            let mut flags = BTreeMap::new();
            flags.insert("monotone_gap".into(), json!(tab.monotone_gap));
            flags.insert("final_relative_gap".into(), json!(tab.rows.last().map(|r| r.relative_gap)));
            let name = if pairs.len() == 1 { "smalltime".to_string() } else { format!("smalltime_{i}") };
            let header = ["T", "T_C_T", "W2_sq_over_4", "gap", "relative_gap", "bandwidth_ok", "iterations"];
            out.tables.push(self.table(&name, &header, rows, flags)?);
        }
        Ok(out)
    }

    fn gradient(&self) -> Run<RunOutput> {
        let pairs = self.pairs()?;
        let mut out = RunOutput::default();
        for (i, p) in pairs.iter().enumerate() {
            let nu = p.nu.as_ref().expect("validated");
            let times = self.cfg.kernel.time_list();
            let tab =
                gradient_convergence_experiment(&p.mu, nu, &times, self.kappa(), None, &self.cfg.solver.options())
                    .ctx(&p.label)?;
            let rows = tab
                .rows
                .iter()
                .map(|r| {
                    vec![fmt_f64(r.time), fmt_f64(r.l2_error), fmt_f64(r.pushforward_w2), r.bandwidth_ok.to_string()]
                })
                .collect();
            let mut flags = BTreeMap::new();
            flags.insert("decreasing".into(), json!(tab.decreasing));
            let sfx = if pairs.len() == 1 { String::new() } else { format!("_{i}") };
            out.tables.push(self.table(
                &format!("gradient{sfx}"),
                &["T", "l2_error", "pushforward_w2", "bandwidth_ok"],
                rows,
                flags,
            )?);
            let mut maps = Vec::new();
            for m in &tab.maps {
                for k in 0..m.points.len() {
                    maps.push(vec![
                        fmt_f64(m.time),
                        fmt_f64(m.points[k]),
                        fmt_f64(m.weights[k]),
                        fmt_f64(m.schrodinger_map[k]),
                        fmt_f64(m.brenier_map[k]),
                    ]);
                }
            }
            let header = ["T", "x", "mu", "schrodinger_map", "brenier_map"];
            out.tables.push(self.table(&format!("gradient_maps{sfx}"), &header, maps, BTreeMap::new())?);
        }
        Ok(out)
    }

    fn interpolate(&self) -> Run<RunOutput> {
        let t = self.single_time();
        let n = self.cfg.battery.n_times.unwrap_or(64);
        let pairs = self.pairs()?;
        let mut out = RunOutput::default();
        for (i, p) in pairs.iter().enumerate() {
            let s = self.solved(&p.mu, p.nu.as_ref().expect("validated"), t, &p.label)?;
            let sfx = if pairs.len() == 1 { String::new() } else { format!("_{i}") };
            let interp = interpolate(&s, n).ctx(&p.label)?;
            let file = format!("interpolation{sfx}.csv");
            let path = self.out.join(&file);
            let mut w = BufWriter::new(File::create(&path).map_err(|e| io_err(&path, e))?);
            for (k, v) in self.metadata() {
                writeln!(w, "# {k}: {v}").map_err(|e| io_err(&path, e))?;
            }
            writeln!(w, "# max_mass_defect: {}", fmt_f64(interp.max_mass_defect())).map_err(|e| io_err(&path, e))?;
            interp.write_csv(self.grid(), &mut w).ctx(&file)?;
            w.flush().map_err(|e| io_err(&path, e))?;
            let mut flags = BTreeMap::new();
            flags.insert("max_mass_defect".into(), json!(interp.max_mass_defect()));
            out.tables.push(TableInfo {
                name: format!("interpolation{sfx}"),
                file,
                rows: n * self.grid().len(),
                flags,
            });

            let curve = gronwall_curve(&s, self.kappa(), n).ctx(&p.label)?;
            let rows = curve
                .times
                .iter()
                .zip(&curve.alpha)
                .zip(&curve.scaled)
                .map(|((t, a), sc)| vec![fmt_f64(*t), fmt_f64(*a), fmt_f64(*sc)])
                .collect();
            let mut flags = BTreeMap::new();
            flags.insert("max_relative_increase".into(), json!(curve.max_relative_increase));
            out.tables.push(self.table(&format!("gronwall{sfx}"), &["t", "alpha", "scaled_alpha"], rows, flags)?);

            for mut r in
                [dynamic_cost_check(&s, n).ctx(&p.label)?, gronwall_decay_check(&s, self.kappa(), n).ctx(&p.label)?]
            {
                Self::label(&mut r, &p.label);
                out.reports.push(r);
            }
        }
        Ok(out)
    }

    fn sobolev(&self) -> Run<RunOutput> {
        let pairs = self.pairs()?;
        let mut jobs = Vec::new();
        for (i, p) in pairs.iter().enumerate() {
            for v in self.variants(i, p)? {
                let label = format!("{}/{}", p.label, v.label);
                jobs.push((format!("{label}/mu"), p.mu.clone(), v.mu.clone()));
                if let (Some(a), Some(b)) = (&p.nu, &v.nu) {
                    jobs.push((format!("{label}/nu"), a.clone(), b.clone()));
                }
            }
        }
        let cg = self.cfg.solver.cg_tol;
        let reps = jobs
            .par_iter()
            .map(|(label, a, b)| {
                let mut r = w2_h_minus_one_comparison(a, b, cg).ctx(label)?;
                Self::label(&mut r, label);
                Ok(r)
            })
            .collect::<Run<_>>()?;
        Ok(RunOutput { reports: reps, ..Default::default() })
    }

    fn orlicz(&self) -> Run<RunOutput> {
        let o = &self.cfg.orlicz;
        let mut ctxs: Vec<(String, OrliczContext)> = (0..o.instances as u64)
            .map(|i| {
                let c =
                    OrliczContext::random(mix(self.seed, &[i]), o.cells, o.spread, o.p, o.q).ctx("orlicz instance")?;
                let k = i as usize + 1;
                if o.extreme_every == 0 || !k.is_multiple_of(o.extreme_every) {
                    return Ok((format!("instance{i}"), c));
                }
                let sign = if (k / o.extreme_every) % 2 == 1 { 1.0 } else { -1.0 };
                let h = c.h().iter().map(|x| (sign * x.ln().abs()).exp()).collect();
                let c = OrliczContext::new(c.base().clone(), h, c.p_meas().clone(), o.p, o.q).ctx("orlicz instance")?;
                Ok((format!("instance{i}/extreme"), c))
            })
            .collect::<Run<_>>()?;
        if o.two_cell {
            let g = Grid::uniform(&[(0.0, 1.0, 2)]).ctx("two-cell grid")?;
            let base = DiscreteMeasure::new(&g, vec![0.5, 0.5]).ctx("two-cell")?;
            let pm = DiscreteMeasure::new(&g, vec![0.75, 0.25]).ctx("two-cell")?;
            ctxs.push(("two_cell".into(), OrliczContext::new(base, vec![2.0, 0.5], pm, 1.0, 1.0).ctx("two-cell")?));
        }
        let reps: Vec<Vec<InequalityReport>> = ctxs
            .par_iter()
            .map(|(label, c)| {
                let mut v = all_bounds(c).ctx(label)?;
                let norm = luxemburg_norm(&c.density(), c.base(), Young::ThetaStar).ctx(label)?;
                let target = (c.entropy() - 1.0).exp();
                let mut id = InequalityReport::evaluate(
                    "theta_star_identity",
                    (norm - target).abs() / target,
                    1e-6,
                    Tolerance { abs: 0.0, rel: 0.0 },
                );
                id.set_term("norm", norm);
                id.set_term("exp_h_minus_one", target);
                id.digest_measures(&[c.base(), c.p_meas()]);
                v.push(id);
                for r in &mut v {
                    Self::label(r, label);
                }
                Ok(v)
            })
            .collect::<Run<_>>()?;
        Ok(RunOutput { reports: reps.into_iter().flatten().collect(), ..Default::default() })
    }
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}
