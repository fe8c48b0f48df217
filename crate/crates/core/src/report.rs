//! Per-point construction reports and their JSON/CSV forms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::constructions::{
    aux_witness_f, build_flagged_werner, build_kcbs, build_ppath, chsh_smax, flagged_closed,
    flagged_kcbs_values, hardy_nchv_bound, hardy_witness, hardy_zero_events, kcbs_closed,
    kcbs_values, witness_w, ConstructionError, HARDY_TARGET,
};
use crate::hvlp::{check_model, HvlpError, ModelClass, DEFAULT_STRATEGY_CAP};
use crate::polytope::{cycle_facets, evaluate_facets, CorrelationVector};
use crate::scenario::EmpiricalModel;

/// A computed quantity with its closed-form reference, if one exists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scalar {
    pub name: String,
    pub value: Option<f64>,
    pub reference: Option<f64>,
    pub deviation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Scalar {
    pub fn new(name: &str, value: f64, reference: Option<f64>) -> Self {
        Self {
            name: name.into(),
            value: Some(value),
            reference,
            deviation: reference.map(|r| value - r),
            note: None,
        }
    }

    pub fn missing(name: &str, reference: Option<f64>, note: String) -> Self {
        Self {
            name: name.into(),
            value: None,
            reference,
            deviation: None,
            note: Some(note),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Feasible,
    Infeasible,
    /// Not run at this point.
    Untested,
    Inconclusive,
    Error,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Feasible => "feasible",
            Status::Infeasible => "infeasible",
            Status::Untested => "untested",
            Status::Inconclusive => "inconclusive",
            Status::Error => "error",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictEntry {
    pub class: String,
    pub status: Status,
    /// A checked certificate backs the status.
    pub certified: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategies: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl VerdictEntry {
    pub fn untested(class: ModelClass, why: &str) -> Self {
        Self {
            class: class.to_string(),
            status: Status::Untested,
            certified: false,
            residual: None,
            margin: None,
            rows: None,
            strategies: None,
            problem_hash: None,
            message: Some(why.into()),
        }
    }
}

/// Solves one class and folds the outcome into a report entry.
pub fn run_class(model: &EmpiricalModel, class: ModelClass, cap: usize) -> VerdictEntry {
    let mut entry = VerdictEntry::untested(class, "");
    entry.message = None;
    match check_model(model, class, true, cap) {
        Ok((problem, cert)) => {
            entry.certified = true;
            entry.rows = Some(problem.rows());
            entry.strategies = Some(problem.cols());
            entry.problem_hash = Some(cert.problem_hash.clone());
            if cert.is_feasible() {
                entry.status = Status::Feasible;
                entry.residual = Some(cert.residual);
            } else {
                entry.status = Status::Infeasible;
                entry.margin = Some(cert.margin);
            }
        }
        Err(HvlpError::Inconclusive(m)) => {
            entry.status = Status::Inconclusive;
            entry.message = Some(m);
        }
        Err(e) => {
            entry.status = Status::Error;
            entry.message = Some(e.to_string());
        }
    }
    entry
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacetEntry {
    /// Which correlation vector was scanned.
    pub vector: String,
    pub gammas: Vec<i8>,
    pub value: f64,
    pub bound: f64,
    pub violated: bool,
    /// bound − value; positive means violation.
    pub violation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionReport {
    pub construction: String,
    pub parameters: BTreeMap<String, f64>,
    pub scalars: Vec<Scalar>,
    pub verdicts: Vec<VerdictEntry>,
    pub facets: Vec<FacetEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ConstructionReport {
    fn new(construction: &str, parameters: &[(&str, f64)]) -> Self {
        Self {
            construction: construction.into(),
            parameters: parameters.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            scalars: Vec::new(),
            verdicts: Vec::new(),
            facets: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn scalar(&self, name: &str) -> Option<&Scalar> {
        self.scalars.iter().find(|s| s.name == name)
    }

    pub fn verdict(&self, class: &str) -> Option<&VerdictEntry> {
        self.verdicts.iter().find(|v| v.class == class)
    }

    fn push(&mut self, name: &str, value: f64, reference: Option<f64>) {
        self.scalars.push(Scalar::new(name, value, reference));
    }

    fn scan(&mut self, label: &str, x: &[f64]) {
        let facets = cycle_facets(5).expect("n = 5 is odd");
        match CorrelationVector::new(x.to_vec()).and_then(|x| evaluate_facets(&x, &facets)) {
            Ok(scan) => self.facets.extend(scan.entries.into_iter().map(|e| FacetEntry {
                vector: label.into(),
                violation: e.bound - e.value,
                gammas: e.gammas,
                value: e.value,
                bound: e.bound,
                violated: e.violated,
            })),
            Err(e) => self.notes.push(format!("{label} facet scan failed: {e}")),
        }
    }
}

/// Which classes to decide and with what enumeration cap.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportOptions {
    pub classes: Vec<ClassChoice>,
    pub cap: usize,
    /// Include the optimizer-backed KCBS scalars.
    pub optimizers: bool,
    /// Part of a sweep: the KCBS GLHV program runs only at c₀ = 1/4 and
    /// other points are reported as untested.
    pub sweep: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassChoice {
    /// NCHV-local for every party.
    NchvLocal,
    Glhv,
    Gnchv,
}

impl ClassChoice {
    pub fn all() -> Vec<ClassChoice> {
        vec![ClassChoice::NchvLocal, ClassChoice::Glhv, ClassChoice::Gnchv]
    }
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            classes: ClassChoice::all(),
            cap: DEFAULT_STRATEGY_CAP,
            optimizers: true,
            sweep: false,
        }
    }
}

fn verdicts(model: &EmpiricalModel, opts: &ReportOptions, glhv: bool) -> Vec<VerdictEntry> {
    let mut out = Vec::new();
    for choice in &opts.classes {
        match choice {
            ClassChoice::NchvLocal => {
                for p in 0..model.scenario().parties.len() {
                    out.push(run_class(model, ModelClass::NchvLocal(p), opts.cap));
                }
            }
            ClassChoice::Glhv if glhv => out.push(run_class(model, ModelClass::Glhv, opts.cap)),
            ClassChoice::Glhv => out.push(VerdictEntry::untested(
                ModelClass::Glhv,
                "sweep points other than c0 = 1/4 are not certified",
            )),
            ClassChoice::Gnchv => out.push(run_class(model, ModelClass::Gnchv, opts.cap)),
        }
    }
    out
}

pub fn ppath_report(h0: f64, phi: f64, opts: &ReportOptions) -> Result<(ConstructionReport, EmpiricalModel), ConstructionError> {
    let c = build_ppath(h0, phi)?;
    let model = c.model()?;
    let mut r = ConstructionReport::new("ppath", &[("h0", h0), ("phi", phi)]);
    let target = h0 * h0 * (1.0 - h0 * h0);
    let events = hardy_zero_events(&c);
    for (i, p) in events.iter().enumerate() {
        r.push(&format!("hardy_event_{}", i + 1), *p, Some(0.0));
    }
    r.push("hardy_event_max", events.iter().copied().fold(0.0, f64::max), Some(0.0));
    r.push("target_probability", c.event_probability(&HARDY_TARGET), Some(target));
    r.push("hardy_witness", hardy_witness(&c), Some(target));
    r.push("nchv_bound", hardy_nchv_bound(&[true; 6]), Some(0.0));
    r.push(
        "max_disturbance",
        model.check_no_disturbance().max_discrepancy,
        Some(0.0),
    );
    r.verdicts = verdicts(&model, opts, true);
    Ok((r, model))
}

pub fn kcbs_report(c0: f64, opts: &ReportOptions) -> Result<(ConstructionReport, EmpiricalModel), ConstructionError> {
    let c = build_kcbs(c0)?;
    let model = c.model()?;
    let v = kcbs_values(&c);
    let a = c.a;
    let mut r = ConstructionReport::new("kcbs", &[("c0", c0)]);
    r.push("branch_probability", v.branch_probability, Some(a));
    r.push("d_uncond", v.d_uncond, Some(kcbs_closed::d_uncond(a)));
    match &v.d_cond {
        Ok(d) => r.push("d_cond", *d, Some(kcbs_closed::d_cond())),
        Err(e) => r.scalars.push(Scalar::missing(
            "d_cond",
            Some(kcbs_closed::d_cond()),
            format!("conditioning failed: {e}"),
        )),
    }
    let w = witness_w(&c);
    r.push("witness", w, Some(kcbs_closed::witness(a)));
    r.push("witness_violation", -3.0 - w, Some(-3.0 - kcbs_closed::witness(a)));
    r.push("a_kcbs", v.a_kcbs, None);
    r.push("c_kcbs", v.c_kcbs, None);
    let closed = kcbs_closed::correlators(a);
    for j in 0..5 {
        r.push(&format!("x{j}"), v.x[j], Some(closed[j]));
    }
    if opts.optimizers {
        match aux_witness_f(c0) {
            Ok(aux) => {
                r.push("aux_f_closed_form", aux.closed_form, None);
                r.push("aux_f_optimized", aux.optimized, Some(aux.closed_form));
                if !aux.agree {
                    r.notes.push(format!(
                        "auxiliary witness: optimizer reaches {:.9} but the closed form gives {:.9}",
                        aux.optimized, aux.closed_form
                    ));
                }
            }
            Err(e) => r.notes.push(format!("auxiliary witness: {e}")),
        }
        match chsh_smax(c0) {
            Ok(s) => r.push("chsh_smax", s.optimized, Some(s.closed_form)),
            Err(e) => r.scalars.push(Scalar::missing("chsh_smax", None, e.to_string())),
        }
    }
    r.scan("unconditional", &v.x);
    if v.d_cond.is_ok() {
        let (_, cond) = c
            .quantum
            .postselect_state(&c.density(), "A1", 0)
            .expect("branch checked above");
        r.scan("conditional", &crate::constructions::kcbs_correlators(&cond));
    }
    r.verdicts = verdicts(&model, opts, !opts.sweep || c0 == 0.25);
    Ok((r, model))
}

pub fn werner_report(eps: f64, w: f64, opts: &ReportOptions) -> Result<(ConstructionReport, EmpiricalModel), ConstructionError> {
    let c = build_flagged_werner(eps, w)?;
    let model = c.model()?;
    let v = flagged_kcbs_values(&c)?;
    let mut r = ConstructionReport::new("werner", &[("eps", eps), ("w", w)]);
    r.push("pt_min_eigenvalue", v.pt_min_eigenvalue, Some(flagged_closed::pt_min(eps, w)));
    let marg = flagged_closed::marginal(eps);
    for i in 0..3 {
        r.push(&format!("marginal_a_{i}"), v.marginal_a[i], Some(marg[i]));
        r.push(&format!("marginal_b_{i}"), v.marginal_b[i], Some(marg[i]));
    }
    r.push("d_uncond", v.d_uncond, Some(flagged_closed::d_on_diagonal(marg)));
    for j in 0..5 {
        r.push(&format!("x{j}"), v.x_uncond[j], None);
    }
    r.push("branch_probability", v.branch_probability, Some(flagged_closed::branch_probability(eps)));
    let q = flagged_closed::conditional(eps, w);
    for i in 0..3 {
        r.push(&format!("conditional_b_{i}"), v.conditional_b[i], Some(q[i]));
    }
    r.push("d_cond", v.d_cond, Some(flagged_closed::d_on_diagonal(q)));
    r.scan("unconditional", &v.x_uncond);
    r.scan("conditional", &v.x_cond);
    r.verdicts = verdicts(&model, opts, true);
    Ok((r, model))
}

/// Nine significant digits for human-readable tables.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    format!("{x:.8e}")
}

/// One CSV row per report: parameters, scalar values and verdict statuses.
pub fn reports_to_csv(reports: &[ConstructionReport]) -> String {
    let mut params: Vec<String> = Vec::new();
    let mut scalars: Vec<String> = Vec::new();
    let mut classes: Vec<String> = Vec::new();
    for r in reports {
        for k in r.parameters.keys() {
            if !params.contains(k) {
                params.push(k.clone());
            }
        }
        for s in &r.scalars {
            if !scalars.contains(&s.name) {
                scalars.push(s.name.clone());
            }
        }
        for v in &r.verdicts {
            if !classes.contains(&v.class) {
                classes.push(v.class.clone());
            }
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["construction".to_string()];
    header.extend(params.iter().cloned());
    header.extend(scalars.iter().cloned());
    header.extend(classes.iter().map(|c| format!("verdict_{c}")));
    header.push("violated_facets".into());
    w.write_record(&header).expect("in-memory write");
    for r in reports {
        let mut row = vec![r.construction.clone()];
        row.extend(params.iter().map(|k| r.parameters.get(k).map(|v| format_sig9(*v)).unwrap_or_default()));
        row.extend(scalars.iter().map(|name| {
            r.scalar(name)
                .and_then(|s| s.value)
                .map(format_sig9)
                .unwrap_or_default()
        }));
        row.extend(
            classes
                .iter()
                .map(|c| r.verdict(c).map(|v| v.status.as_str().to_string()).unwrap_or_default()),
        );
        row.push(r.facets.iter().filter(|f| f.violated).count().to_string());
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}
