use std::fmt;
use std::path::Path;

use bridgestab_core::families::Family;
use bridgestab_core::{Grid, Perturbation, SolveOptions, Tolerance};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Solve,
    Stability,
    CostStability,
    EotStability,
    Corrector,
    Smalltime,
    GradientMap,
    Interpolate,
    Sobolev,
    Orlicz,
}

impl Scenario {
    pub const ALL: [Scenario; 10] = [
        Scenario::Solve,
        Scenario::Stability,
        Scenario::CostStability,
        Scenario::EotStability,
        Scenario::Corrector,
        Scenario::Smalltime,
        Scenario::GradientMap,
        Scenario::Interpolate,
        Scenario::Sobolev,
        Scenario::Orlicz,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Solve => "solve",
            Scenario::Stability => "stability",
            Scenario::CostStability => "cost-stability",
            Scenario::EotStability => "eot-stability",
            Scenario::Corrector => "corrector",
            Scenario::Smalltime => "smalltime",
            Scenario::GradientMap => "gradient-map",
            Scenario::Interpolate => "interpolate",
            Scenario::Sobolev => "sobolev",
            Scenario::Orlicz => "orlicz",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            Scenario::Solve => "solve one Schrödinger system, write potentials and metadata",
            Scenario::Stability => "plan stability, entropy and Fisher forms",
            Scenario::CostStability => "entropic and Schrödinger cost stability",
            Scenario::EotStability => "quadratic entropic transport stability over a list of epsilons",
            Scenario::Corrector => "corrector estimates on both marginals",
            Scenario::Smalltime => "T·C_T against W2²/4 along a list of times",
            Scenario::GradientMap => "Schrödinger map against the 1D Brenier map",
            Scenario::Interpolate => "entropic interpolation, dynamic cost identity and Grönwall decay",
            Scenario::Sobolev => "W2 against twice the H^-1 distance",
            Scenario::Orlicz => "log-integrability bounds on seeded instances",
        }
    }

    fn uses_kernel(self) -> bool {
        !matches!(self, Scenario::EotStability | Scenario::Sobolev | Scenario::Orlicz)
    }

    fn uses_grid(self) -> bool {
        self != Scenario::Orlicz
    }

    fn one_dimensional(self) -> bool {
        matches!(self, Scenario::Smalltime | Scenario::GradientMap)
    }

    fn perturbs(self) -> bool {
        matches!(self, Scenario::Stability | Scenario::CostStability | Scenario::EotStability | Scenario::Sobolev)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub axes: Vec<AxisSpec>,
}

impl GridSpec {
    pub fn build(&self) -> bridgestab_core::Result<Grid> {
        let spec: Vec<_> = self.axes.iter().map(|a| (a.lo, a.hi, a.cells)).collect();
        Grid::uniform(&spec)
    }

    pub fn describe(&self) -> String {
        self.axes.iter().map(|a| format!("[{:?}, {:?}] x {}", a.lo, a.hi, a.cells)).collect::<Vec<_>>().join(" ; ")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelName {
    Heat,
    Ou,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub kind: Option<KernelName>,
    /// Final time for single-time scenarios.
    pub time: Option<f64>,
    /// Time list for corrector, smalltime and gradient-map.
    pub times: Option<Vec<f64>>,
    pub kappa: Option<f64>,
    /// Entropic regularizations for eot-stability.
    pub epsilons: Option<Vec<f64>>,
}

impl KernelSpec {
    /// Curvature of the reference: 0 for heat.
    pub fn curvature(&self) -> f64 {
        match self.kind.unwrap_or(KernelName::Ou) {
            KernelName::Heat => 0.0,
            KernelName::Ou => self.kappa.unwrap_or(f64::NAN),
        }
    }

    pub fn time_list(&self) -> Vec<f64> {
        match (&self.times, self.time) {
            (Some(ts), _) => ts.clone(),
            (None, Some(t)) => vec![t],
            (None, None) => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    pub tol: f64,
    pub max_iter: usize,
    pub cg_tol: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let s = SolveOptions::default();
        SolverSpec { tol: s.tol, max_iter: s.max_iter, cg_tol: 1e-12 }
    }
}

impl SolverSpec {
    pub fn options(&self) -> SolveOptions {
        SolveOptions { tol: self.tol, max_iter: self.max_iter, init_psi: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceSpec {
    pub abs: f64,
    pub rel: f64,
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        let t = Tolerance::default();
        ToleranceSpec { abs: t.abs, rel: t.rel }
    }
}

impl ToleranceSpec {
    pub fn get(&self) -> Tolerance {
        Tolerance { abs: self.abs, rel: self.rel }
    }
}

/// Which marginal pairs a battery runs on.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatterySpec {
    /// Seeded random smooth pairs; the explicit `mu`/`nu` pair is used when absent.
    pub random_pairs: Option<usize>,
    /// Perturbation sizes `s` for `(1 + s·h)`; each runs `seeds_per_amplitude` seeded waves.
    pub amplitudes: Vec<f64>,
    pub seeds_per_amplitude: Option<usize>,
    /// Time slices for interpolate.
    pub n_times: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrliczSpec {
    pub instances: usize,
    pub cells: usize,
    pub spread: f64,
    pub p: f64,
    pub q: f64,
    /// Also run the hand-computable two-cell instance.
    pub two_cell: bool,
    /// Every n-th instance gets `h` folded onto one side of 1 (0: never).
    pub extreme_every: usize,
}

impl Default for OrliczSpec {
    fn default() -> Self {
        OrliczSpec { instances: 100, cells: 30, spread: 1.5, p: 1.0, q: 1.0, two_cell: true, extreme_every: 0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: Option<String>,
    /// Also write the full plan for the solve scenario.
    pub plan: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub seed: Option<u64>,
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub tolerance: ToleranceSpec,
    pub mu: Option<Family>,
    pub nu: Option<Family>,
    pub mu_bar: Option<Family>,
    pub nu_bar: Option<Family>,
    pub perturb_mu: Option<Perturbation>,
    pub perturb_nu: Option<Perturbation>,
    #[serde(default)]
    pub battery: BatterySpec,
    #[serde(default)]
    pub orlicz: OrliczSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Violation,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.severity {
            Severity::Violation => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{s}: {}: {}", self.field, self.message)
    }
}

pub fn parse(text: &str) -> Result<ExperimentConfig, String> {
    toml::from_str(text).map_err(|e| e.to_string())
}

pub fn load(path: &Path) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

impl ExperimentConfig {
    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let h = Sha256::digest(&json);
        h.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    fn randomized(&self) -> bool {
        let random_pairs = self.battery.random_pairs.is_some();
        let waves = self.scenario.perturbs()
            && self.mu_bar.is_none()
            && self.nu_bar.is_none()
            && self.perturb_mu.is_none()
            && self.perturb_nu.is_none();
        random_pairs || waves || self.scenario == Scenario::Orlicz
    }

    pub fn needs_pair(&self) -> bool {
        self.scenario != Scenario::Orlicz && self.battery.random_pairs.is_none()
    }
}

fn finite_positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

/// Violations make the config unrunnable; warnings do not.
pub fn validate(cfg: &ExperimentConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut violation = |field: &str, message: String| {
        out.push(Diagnostic { severity: Severity::Violation, field: field.into(), message })
    };
    let sc = cfg.scenario;
    if cfg.randomized() && cfg.seed.is_none() {
        violation("seed", format!("scenario `{}` draws random inputs and needs a seed", sc.name()));
    }
    let grid = match (&cfg.grid, sc.uses_grid()) {
        (None, true) => {
            violation("grid", "missing grid section".into());
            None
        }
        (Some(g), true) => match g.build() {
            Ok(grid) => Some(grid),
            Err(e) => {
                violation("grid.axes", e.to_string());
                None
            }
        },
        _ => None,
    };
    if let Some(g) = &grid {
        if sc.one_dimensional() && g.dim() != 1 {
            violation("grid.axes", format!("scenario `{}` needs a 1D grid", sc.name()));
        }
    }
    let k = &cfg.kernel;
    if sc.uses_kernel() {
        if k.kind.unwrap_or(KernelName::Ou) == KernelName::Ou {
            match k.kappa {
                None => violation("kernel.kappa", "OU kernel needs kappa".into()),
                Some(x) if !finite_positive(x) => violation("kernel.kappa", format!("must be > 0, got {x}")),
                _ => {}
            }
        } else if let Some(x) = k.kappa {
            if x != 0.0 {
                violation("kernel.kappa", format!("heat kernel has zero curvature, got kappa = {x}"));
            }
        }
        let multi = matches!(sc, Scenario::Corrector | Scenario::Smalltime | Scenario::GradientMap);
        let ts = k.time_list();
        if ts.is_empty() {
            violation(if multi { "kernel.times" } else { "kernel.time" }, "missing final time".into());
        } else if !multi && k.times.is_some() {
            violation("kernel.times", format!("scenario `{}` takes a single kernel.time", sc.name()));
        }
        for t in &ts {
            if !finite_positive(*t) {
                violation("kernel.time", format!("times must be > 0, got {t}"));
            }
        }
    }
    if sc == Scenario::EotStability {
        match &k.epsilons {
            None => violation("kernel.epsilons", "eot-stability needs a list of epsilons".into()),
            Some(e) if e.is_empty() || e.iter().any(|x| !finite_positive(*x)) => {
                violation("kernel.epsilons", "epsilons must be a nonempty list of positive numbers".into())
            }
            _ => {}
        }
        if let Some(x) = k.kappa {
            if !finite_positive(x) {
                violation("kernel.kappa", format!("must be > 0, got {x}"));
            }
        }
    }
    if cfg.needs_pair() {
        if cfg.mu.is_none() {
            violation("mu", "missing marginal (or set battery.random_pairs)".into());
        }
        if cfg.nu.is_none() && sc != Scenario::Sobolev {
            violation("nu", "missing marginal (or set battery.random_pairs)".into());
        }
    }
    if sc.perturbs() {
        let explicit =
            cfg.mu_bar.is_some() || cfg.nu_bar.is_some() || cfg.perturb_mu.is_some() || cfg.perturb_nu.is_some();
        if !explicit && cfg.battery.amplitudes.is_empty() {
            violation(
                "battery.amplitudes",
                "give mu_bar/nu_bar, perturb_mu/perturb_nu, or perturbation amplitudes".into(),
            );
        }
        for s in &cfg.battery.amplitudes {
            if !(s.abs() < 1.0) {
                violation("battery.amplitudes", format!("|s| < 1 required, got {s}"));
            }
        }
        for (f, p) in [("perturb_mu", &cfg.perturb_mu), ("perturb_nu", &cfg.perturb_nu)] {
            if let Some(p) = p {
                if !(p.amplitude.abs() < 1.0) {
                    violation(f, format!("|amplitude| < 1 required, got {}", p.amplitude));
                }
            }
        }
    }
    if sc == Scenario::Interpolate {
        if let Some(n) = cfg.battery.n_times {
            if n < bridgestab_core::dynamics::MIN_SLICES {
                violation("battery.n_times", format!("need at least {} slices", bridgestab_core::dynamics::MIN_SLICES));
            }
        }
    }
    if sc == Scenario::Orlicz {
        let o = &cfg.orlicz;
        if o.cells < 2 {
            violation("orlicz.cells", "need at least two cells".into());
        }
        if !(finite_positive(o.p) && finite_positive(o.q)) {
            violation("orlicz.p", "exponents must be > 0".into());
        }
        if !(o.spread.is_finite() && o.spread >= 0.0) {
            violation("orlicz.spread", "must be >= 0".into());
        }
    }
    if !finite_positive(cfg.solver.tol) {
        violation("solver.tol", "must be > 0".into());
    }
    if cfg.tolerance.abs < 0.0 || cfg.tolerance.rel < 0.0 {
        violation("tolerance", "tolerances must be >= 0".into());
    }
    // Soft checks.
    if let (Some(g), true) = (&grid, sc.uses_kernel()) {
        let h = g.max_cell_width();
        for t in k.time_list() {
            if t > 0.0 && (2.0 * t).sqrt() < 2.0 * h {
                out.push(Diagnostic {
                    severity: Severity::Warning,
                    field: "kernel.time".into(),
                    message: format!("T = {t} is below the bandwidth guard (sqrt(2T) < 2h = {:.3e})", 2.0 * h),
                });
            }
        }
    }
    out
}
