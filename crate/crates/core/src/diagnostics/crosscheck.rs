//! Second evaluator: rebuilds each right-hand side from the terms a report recorded.

use super::report::InequalityReport;

/// Agreement required between the two evaluators.
pub const CROSSCHECK_TOL: f64 = 1e-10;

fn sq(x: f64) -> f64 {
    x.max(0.0).sqrt()
}

fn mul(a: f64, n: f64) -> f64 {
    if n.is_infinite() {
        n
    } else {
        a * n
    }
}

struct Terms<'a>(&'a InequalityReport);

impl Terms<'_> {
    fn get(&self, k: &str) -> Option<f64> {
        self.0.term(k)
    }
}

/// Four `√(C - H)·‖·‖` products, keyed as `(cost, entropy, norm)`.
const SP_PRODUCTS: [(&str, &str, &str); 4] = [
    ("ct", "h_mu", "norm_mu"),
    ("ct", "h_nu", "norm_nu"),
    ("ct_bar", "h_mu_bar", "norm_mubar"),
    ("ct_bar", "h_nu_bar", "norm_nubar"),
];

fn sp_sum(t: &Terms, which: &[usize]) -> Option<f64> {
    let mut s = 0.0;
    for &i in which {
        let (c, h, n) = SP_PRODUCTS[i];
        s += mul(sq(t.get(c)? - t.get(h)?), t.get(n)?);
    }
    Some(s)
}

fn hsym(t: &Terms, x: &str) -> Option<f64> {
    Some(t.get(&format!("h_{x}_{x}bar"))? + t.get(&format!("h_{x}bar_{x}"))?)
}

fn fisher_sum(t: &Terms) -> Option<f64> {
    let rows = [
        ("i_mu", "ct", "h_mu", "norm_mu"),
        ("i_mu_bar", "ct_bar", "h_mu_bar", "norm_mubar"),
        ("i_nu", "ct", "h_nu", "norm_nu"),
        ("i_nu_bar", "ct_bar", "h_nu_bar", "norm_nubar"),
    ];
    let e = t.get("E")?;
    let mut s = 0.0;
    for (i, c, h, n) in rows {
        s += mul((sq(t.get(i)?) + sq(t.get(c)? - t.get(h)?)) / e.sqrt(), t.get(n)?);
    }
    Some(s)
}

fn eot_sum(t: &Terms) -> Option<f64> {
    let (eps, c) = (t.get("eps")?, t.get("c_eps")?);
    let rows = [
        ("s", "hl_nu", "norm_mu"),
        ("s", "hl_mu", "norm_nu"),
        ("s_bar", "hl_nubar", "norm_mubar"),
        ("s_bar", "hl_mubar", "norm_nubar"),
    ];
    let mut s = 0.0;
    for (cost, h, n) in rows {
        s += mul(sq(t.get(cost)? + eps * t.get(h)? + c), t.get(n)?);
    }
    Some(2.0 * s)
}

/// Independent recomputation of `report.rhs`; `None` for unknown names or missing terms.
pub fn recompute_rhs(report: &InequalityReport) -> Option<f64> {
    let t = Terms(report);
    let all = [0, 1, 2, 3];
    match report.name.as_str() {
        "corrector_nu" | "corrector_mu" => Some((t.get("ct")? - t.get("h")?) / t.get("E")?),
        "stab_plans" => Some(hsym(&t, "mu")? + hsym(&t, "nu")? + sp_sum(&t, &all)? / t.get("E")?.sqrt()),
        "stab_plans_fisher" | "stab_cost_fisher" => fisher_sum(&t),
        "stab_cost" => {
            let tt = t.get("T")?;
            Some(tt * hsym(&t, "mu")?.min(hsym(&t, "nu")?) + tt / t.get("E")?.sqrt() * sp_sum(&t, &all)?)
        }
        "stab_cost_upper" => {
            let tt = t.get("T")?;
            let h = t.get("h_mubar_mu")?.min(t.get("h_nubar_nu")?);
            Some(tt * h + tt / t.get("E")?.sqrt() * sp_sum(&t, &[0, 1])?)
        }
        "stab_cost_lower" => {
            let tt = t.get("T")?;
            let h = t.get("h_mu_mubar")?.min(t.get("h_nu_nubar")?);
            Some(tt * h + tt / t.get("E")?.sqrt() * sp_sum(&t, &[2, 3])?)
        }
        "eot_cost_stab" => Some(t.get("eps")? * hsym(&t, "mu")?.min(hsym(&t, "nu")?) + eot_sum(&t)?),
        "eot_plan_stab" => Some(t.get("eps")? * (hsym(&t, "mu")? + hsym(&t, "nu")?) + eot_sum(&t)?),
        "eot_cost_stab_kappa" | "eot_plan_stab_kappa" => {
            let eps = t.get("eps")?;
            let corr = eps / t.get("E")?.sqrt() * sp_sum(&t, &all)?;
            if report.name == "eot_plan_stab_kappa" {
                return Some(eps * (hsym(&t, "mu")? + hsym(&t, "nu")?) + corr);
            }
            let damp = 1.0 - (-t.get("kappa")? * t.get("T")?).exp();
            let mut moments = 0.0;
            for x in ["mu", "nu"] {
                let m = sq(t.get(&format!("m2_{x}"))?) + sq(t.get(&format!("m2_{x}bar"))?);
                moments += m * t.get(&format!("w2_{x}"))?;
            }
            Some(eps * hsym(&t, "mu")?.min(hsym(&t, "nu")?) + damp * moments + corr)
        }
        _ => None,
    }
}

/// `Ok(())` when both evaluators agree, or when the report is not covered.
pub fn verify(report: &InequalityReport) -> Result<(), String> {
    let Some(r) = recompute_rhs(report) else {
        return Ok(());
    };
    let a = report.rhs;
    if a == r || (a - r).abs() <= CROSSCHECK_TOL * (1.0 + a.abs().max(r.abs())) {
        Ok(())
    } else {
        Err(format!("{}: rhs {a:e} vs recomputed {r:e}", report.name))
    }
}
