//! One function per subcommand. Each returns the JSON results and a CSV
//! table.

use hypwalk::boundary::{
    component_measures, eigenmeasure_tv, entropy_boundary, escape_boundary, kernel_for, monte_carlo_measure,
    pressure_and_eigenmeasure, stationary_measure, transfer_operator, BoundaryKernel, CylinderMeasure,
    FixedPointOptions, Orientation, DENSITY_THRESHOLD, PLUS,
};
use hypwalk::green::GreenEngine;
use hypwalk::lab::{
    kink_detector, lipschitz_scan, neighborhood_stability, random_probes, Grid, LabOptions, Quantity, SimplexPoint,
    StabilityOptions, StabilityRow,
};
use hypwalk::obstacle::{ancona_verify, chain_apply, contraction_rate, first_visit_matrix, scale_sweep, Chain, Obstacle};
use hypwalk::walk::{entropy_escape_sequences, monte_carlo_escape, DEFAULT_PRUNE_EPS};
use hypwalk::{Element, Exec, Family, Group, Letter, StepMeasure};
use serde_json::{json, Value};

use crate::config::Resolved;
use crate::error::{CliError, InModule};
use crate::output::Table;

pub struct Ctx {
    pub g: Group,
    pub p: StepMeasure,
    pub r: Resolved,
    pub exec: Exec,
}

pub struct Output {
    pub results: Value,
    pub table: Table,
}

/// Commands that draw random numbers and therefore need a seed.
pub fn needs_seed(command: &str, r: &Resolved) -> bool {
    match command {
        "walk" | "harmonic" => r.paths > 0,
        "obstacle-verify" | "lipschitz-scan" | "stability" => true,
        _ => false,
    }
}

pub fn run(command: &str, ctx: &Ctx) -> Result<Output, CliError> {
    match command {
        "walk" => walk(ctx),
        "green" => green(ctx),
        "martin" => martin(ctx),
        "obstacle-verify" => obstacle_verify(ctx),
        "harmonic" => harmonic(ctx),
        "entropy" => entropy(ctx),
        "escape" => escape(ctx),
        "lipschitz-scan" => lipschitz(ctx),
        "kink-scan" => kink(ctx),
        "stability" => stability(ctx),
        _ => Err(CliError::validation("command", format!("unknown command {command}"))),
    }
}

/// Shortest round-trip form; empty for non-finite values.
fn num(v: f64) -> String {
    if v.is_finite() {
        serde_json::to_string(&v).expect("finite floats serialize")
    } else {
        String::new()
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn check_min(field: &str, value: usize, min: usize) -> Result<(), CliError> {
    if value < min {
        return Err(CliError::validation(format!("params.{field}"), format!("must be at least {min}, got {value}")));
    }
    Ok(())
}

fn seed(ctx: &Ctx) -> Result<u64, CliError> {
    ctx.r.seed.ok_or_else(|| CliError::validation("params.seed", "stochastic command needs a seed"))
}

fn parse_points(ctx: &Ctx, field: &str, words: &[String]) -> Result<Vec<Element>, CliError> {
    words
        .iter()
        .enumerate()
        .map(|(i, w)| ctx.g.parse(w).map_err(|e| CliError::validation(format!("params.{field}[{i}]"), e.to_string())))
        .collect()
}

/// `params.x`, or the identity and the generators.
fn x_points(ctx: &Ctx) -> Result<Vec<Element>, CliError> {
    match &ctx.r.x {
        Some(words) => parse_points(ctx, "x", words),
        None => Ok(std::iter::once(ctx.g.identity()).chain(ctx.g.generators()).collect()),
    }
}

/// Repeats the word `pattern` up to `len` letters and checks the result is
/// in normal form.
fn periodic_ray(ctx: &Ctx, field: &str, pattern: &str, len: usize) -> Result<Vec<Letter>, CliError> {
    let bad = |msg: String| CliError::validation(format!("params.{field}"), msg);
    let letters = match ctx.g.parse(pattern).map_err(|e| bad(e.to_string()))? {
        Element::Word(w) if !w.is_empty() => w,
        _ => return Err(bad("ray pattern must be a nonempty word".into())),
    };
    let ray: Vec<Letter> = (0..len).map(|i| letters[i % letters.len()]).collect();
    ctx.g
        .check(&Element::Word(ray.clone()))
        .map_err(|_| bad(format!("pattern {pattern:?} does not repeat to a reduced word")))?;
    Ok(ray)
}

fn default_ray_pattern(ctx: &Ctx) -> String {
    ctx.g.format(&ctx.g.generators()[0])
}

fn word_label(g: &Group, w: &[Letter]) -> String {
    match g.family() {
        Family::Integer => if w.first() == Some(&PLUS) { "+inf" } else { "-inf" }.to_string(),
        _ => g.format(&Element::Word(w.to_vec())),
    }
}

fn engine(ctx: &Ctx) -> Result<GreenEngine, CliError> {
    GreenEngine::new(&ctx.p, false).in_module("green-martin")
}

fn walk(ctx: &Ctx) -> Result<Output, CliError> {
    let n = ctx.r.n;
    check_min("n", n, 2)?;
    let s = entropy_escape_sequences(&ctx.p, n, DEFAULT_PRUNE_EPS, ctx.exec).in_module("walk-measure")?;
    let mut results = json!({
        "n": n,
        "method": to_value(&s.method),
        "entropy": to_value(&s.entropy),
        "escape": to_value(&s.escape),
        "defect": s.defect.last().copied().unwrap_or(0.0),
    });
    if ctx.r.paths > 0 {
        let (mean, se) = monte_carlo_escape(&ctx.p, n, ctx.r.paths, seed(ctx)?, ctx.exec);
        results["monte_carlo"] = json!({"paths": ctx.r.paths, "escape": mean, "std_err": se});
    }
    let mut table = Table::new(&["n", "H_n", "L_n", "H_n - H_n-1", "L_n - L_n-1", "defect"]);
    for i in 0..=n {
        let (dh, dl) = if i == 0 {
            (String::new(), String::new())
        } else {
            (num(s.entropy.values[i] - s.entropy.values[i - 1]), num(s.escape.values[i] - s.escape.values[i - 1]))
        };
        let defect = s.defect.get(i).map(|d| num(*d)).unwrap_or_default();
        table.push(vec![i.to_string(), num(s.entropy.values[i]), num(s.escape.values[i]), dh, dl, defect]);
    }
    Ok(Output { results, table })
}

fn green(ctx: &Ctx) -> Result<Output, CliError> {
    let eng = engine(ctx)?;
    let mut rows = Vec::new();
    let mut table = Table::new(&["x", "G", "G_lower", "G_upper", "u_lower", "u_upper", "u_trunc_lower", "u_trunc_upper"]);
    for x in x_points(ctx)? {
        let rep = eng.green(&x, ctx.r.tol).in_module("green-martin")?;
        let iv = rep.green.interval();
        // Second route for u(e, x): hitting probability on the tube of radius trunc_r.
        let ut = eng
            .restricted_hitting(&ctx.g.identity(), &x, |_| true, ctx.r.trunc_r)
            .in_module("green-martin")?;
        table.push(vec![
            ctx.g.format(&x),
            num(rep.green.value),
            num(iv.lower),
            num(iv.upper),
            num(rep.u_e_x.lower),
            num(rep.u_e_x.upper),
            num(ut.lower),
            num(ut.upper),
        ]);
        rows.push(json!({
            "x": ctx.g.format(&x),
            "report": to_value(&rep),
            "interval": to_value(&iv),
            "u_truncated": to_value(&ut),
        }));
    }
    let s = eng.spectral();
    let results = json!({
        "spectral": {"zeta": s.zeta, "zeta_refined": s.zeta_refined, "n_used": s.n_used},
        "rows": rows,
    });
    Ok(Output { results, table })
}

fn martin(ctx: &Ctx) -> Result<Output, CliError> {
    let eng = engine(ctx)?;
    let xs = x_points(ctx)?;
    let mut rows = Vec::new();
    let mut table = Table::new(&["x", "K", "K_lower", "K_upper"]);
    let target = if let Some(y) = &ctx.r.y {
        let y = ctx.g.parse(y).map_err(|e| CliError::validation("params.y", e.to_string()))?;
        for x in &xs {
            let k = eng.martin_kernel(&y, x, ctx.r.tol).in_module("green-martin")?;
            table.push(vec![ctx.g.format(x), num(k.value), num(k.interval.lower), num(k.interval.upper)]);
            rows.push(json!({"x": ctx.g.format(x), "kernel": to_value(&k)}));
        }
        json!({"y": ctx.g.format(&y)})
    } else {
        let pattern = ctx.r.ray.clone().unwrap_or_else(|| default_ray_pattern(ctx));
        let ray = periodic_ray(ctx, "ray", &pattern, ctx.r.ray_len.unwrap_or(80))?;
        for x in &xs {
            let k = eng.martin_kernel_boundary(&ray, x, ctx.r.tol).in_module("green-martin")?;
            table.push(vec![ctx.g.format(x), num(k.value), num(k.interval.lower), num(k.interval.upper)]);
            rows.push(json!({"x": ctx.g.format(x), "kernel": to_value(&k)}));
        }
        json!({"ray_pattern": pattern, "ray_len": ray.len()})
    };
    Ok(Output {
        results: json!({"target": target, "rows": rows}),
        table,
    })
}

fn obstacle_verify(ctx: &Ctx) -> Result<Output, CliError> {
    let eng = engine(ctx)?;
    let seed = seed(ctx)?;
    let width = ctx.r.width;
    let k = ctx.r.k;
    check_min("k", k, 1)?;
    let pattern = ctx.r.ray.clone().unwrap_or_else(|| default_ray_pattern(ctx));
    let r = ctx.p.step_radius().max(1);
    // Long enough for the sweep at 48r and for the chain.
    let sweep_len = ctx.r.ray_len.unwrap_or(4 * 48 * r + 8 * r);
    let (m, sweep) = match ctx.r.m {
        Some(m) => (m, Value::Null),
        None => {
            let ray = periodic_ray(ctx, "ray", &pattern, sweep_len)?;
            let s = scale_sweep(&eng, &ray, width).in_module("obstacle-chain")?;
            (s.chosen.unwrap_or(12 * r), to_value(&s))
        }
    };
    let len = ctx.r.ray_len.unwrap_or(4 * m + 2 * m * (k + 2) + 8 * r);
    let ray = periodic_ray(ctx, "ray", &pattern, len)?;
    let obs = Obstacle::build(&ctx.p, &ray, 2 * m, m, width).in_module("obstacle-chain")?;
    let a = first_visit_matrix(&eng, &obs, None).in_module("obstacle-chain")?;
    let rep = ancona_verify(&eng, &obs, &a).in_module("obstacle-chain")?;
    let chain = Chain::build(&eng, &ray, 4 * m, m, k, width).in_module("obstacle-chain")?;
    let run = chain_apply(&chain, 2.0, seed).in_module("obstacle-chain")?;
    let mut table = Table::new(&["stage", "theta"]);
    for (i, t) in run.theta_log.iter().enumerate() {
        table.push(vec![(i + 1).to_string(), num(*t)]);
    }
    let results = json!({
        "m": m,
        "sweep": sweep,
        "obstacle": to_value(&obs.summary()),
        "ancona": to_value(&rep),
        "tau": contraction_rate(rep.c1),
        "chain": to_value(&run),
    });
    Ok(Output { results, table })
}

fn cylinder_measure(ctx: &Ctx) -> Result<CylinderMeasure, CliError> {
    let d = ctx.r.depth;
    check_min("depth", d, 1)?;
    if ctx.r.paths > 0 {
        return monte_carlo_measure(&ctx.p, d, ctx.r.paths, seed(ctx)?, ctx.exec).in_module("boundary-measure");
    }
    stationary_measure(&ctx.p, d, FixedPointOptions::default()).in_module("boundary-measure")
}

fn harmonic(ctx: &Ctx) -> Result<Output, CliError> {
    let nu = cylinder_measure(ctx)?;
    let mut results = json!({"measure": to_value(&nu)});
    let mut eigen: Option<Vec<f64>> = None;
    if !matches!(ctx.g.family(), Family::Integer) {
        let kernel = kernel_for(&ctx.p).in_module("boundary-measure")?;
        let op = transfer_operator(&ctx.g, kernel.as_ref(), nu.depth, 0, Orientation::Harmonic).in_module("boundary-measure")?;
        let rep = pressure_and_eigenmeasure(&op, 1e-13, 10_000).in_module("boundary-measure")?;
        results["pressure"] = json!(rep.pressure);
        results["eigenmeasure_tv"] = json!(eigenmeasure_tv(&rep, &nu));
        results["iterations"] = json!(rep.iterations);
        eigen = Some(nu.words.iter().map(|w| rep.words.iter().position(|v| v == w).map_or(f64::NAN, |i| rep.eigenmeasure[i])).collect());
    }
    let mut table = Table::new(&["word", "mass", "std_err", "eigenmeasure"]);
    for (i, w) in nu.words.iter().enumerate() {
        let se = nu.std_err.as_ref().map(|s| num(s[i])).unwrap_or_default();
        let ev = eigen.as_ref().map(|e| num(e[i])).unwrap_or_default();
        table.push(vec![word_label(&ctx.g, w), num(nu.mass[i]), se, ev]);
    }
    Ok(Output { results, table })
}

fn exact_kernel(p: &StepMeasure) -> Option<Box<dyn BoundaryKernel>> {
    let nn_integer = matches!(p.group().family(), Family::Integer) && p.step_radius() == 1;
    if p.is_nearest_neighbor() || nn_integer {
        kernel_for(p).ok()
    } else {
        None
    }
}

fn side_by_side(name: &str, boundary: f64, direct: f64, error_bar: f64) -> Table {
    let mut table = Table::new(&["quantity", "boundary", "direct", "direct_error_bar", "difference"]);
    table.push(vec![name.to_string(), num(boundary), num(direct), num(error_bar), num(boundary - direct)]);
    table
}

fn direct_series(ctx: &Ctx) -> Result<hypwalk::walk::WalkSeries, CliError> {
    check_min("n", ctx.r.n, 2)?;
    entropy_escape_sequences(&ctx.p, ctx.r.n, DEFAULT_PRUNE_EPS, ctx.exec).in_module("walk-measure")
}

fn entropy(ctx: &Ctx) -> Result<Output, CliError> {
    check_min("depth", ctx.r.depth, 1)?;
    let nu = if matches!(ctx.g.family(), Family::Integer) {
        component_measures(&ctx.p, ctx.r.depth).in_module("boundary-measure")?.swap_remove(0)
    } else {
        stationary_measure(&ctx.p, ctx.r.depth, FixedPointOptions::default()).in_module("boundary-measure")?
    };
    let kernel = exact_kernel(&ctx.p);
    let rep = entropy_boundary(&ctx.p, &nu, kernel.as_deref(), DENSITY_THRESHOLD).in_module("boundary-measure")?;
    let s = direct_series(ctx)?;
    let results = json!({
        "boundary": to_value(&rep),
        "direct": {"n": ctx.r.n, "value": s.entropy.extrapolated, "error_bar": s.entropy.error_bar},
        "difference": rep.entropy - s.entropy.extrapolated,
    });
    let table = side_by_side("entropy", rep.entropy, s.entropy.extrapolated, s.entropy.error_bar);
    Ok(Output { results, table })
}

fn escape(ctx: &Ctx) -> Result<Output, CliError> {
    check_min("depth", ctx.r.depth, 1)?;
    let measures = component_measures(&ctx.p, ctx.r.depth).in_module("boundary-measure")?;
    let rep = escape_boundary(&ctx.p, &measures).in_module("boundary-measure")?;
    let s = direct_series(ctx)?;
    let results = json!({
        "boundary": to_value(&rep),
        "direct": {"n": ctx.r.n, "value": s.escape.extrapolated, "error_bar": s.escape.error_bar},
        "difference": rep.escape - s.escape.extrapolated,
    });
    let table = side_by_side("escape", rep.escape, s.escape.extrapolated, s.escape.error_bar);
    Ok(Output { results, table })
}

fn lab_options(ctx: &Ctx) -> LabOptions {
    LabOptions {
        depth: ctx.r.depth,
        floor: ctx.r.floor,
        exec: ctx.exec,
    }
}

fn quantity(ctx: &Ctx, allow_phi: bool) -> Result<Quantity, CliError> {
    match ctx.r.quantity.as_str() {
        "entropy" => Ok(Quantity::Entropy),
        "escape" => Ok(Quantity::Escape),
        "phi" if allow_phi => {
            let x = x_points(ctx)?.into_iter().find(|x| *x != ctx.g.identity()).unwrap_or_else(|| ctx.g.generators()[0].clone());
            let len = ctx.r.ray_len.unwrap_or(40);
            let patterns = ctx.r.rays.clone().unwrap_or_else(|| vec![default_ray_pattern(ctx)]);
            let rays = patterns.iter().map(|pat| periodic_ray(ctx, "rays", pat, len)).collect::<Result<_, _>>()?;
            Ok(Quantity::Phi { x, rays, kappa: None })
        }
        other => Err(CliError::validation("params.quantity", format!("unsupported quantity {other:?}"))),
    }
}

fn coords_label(c: &[f64]) -> String {
    c.iter().map(|v| num(*v)).collect::<Vec<_>>().join(";")
}

fn lipschitz(ctx: &Ctx) -> Result<Output, CliError> {
    let q = quantity(ctx, true)?;
    check_min("points", ctx.r.points, 1)?;
    let grid = Grid::new(ctx.r.points, ctx.r.spacing, seed(ctx)?);
    let rep = lipschitz_scan(&ctx.p, &q, &grid, lab_options(ctx)).in_module("regularity-lab")?;
    let mut results = json!({"quantity": q.name(), "grid": to_value(&grid), "report": to_value(&rep)});
    if ctx.r.refine {
        let fine = lipschitz_scan(&ctx.p, &q, &grid.refined(), lab_options(ctx)).in_module("regularity-lab")?;
        let rel = (fine.max_quotient - rep.max_quotient).abs() / rep.max_quotient;
        results["refined"] = json!({"max_quotient": fine.max_quotient, "relative_change": rel});
    }
    let mut table = Table::new(&["a", "b", "value_a", "value_b", "delta", "theta", "quotient"]);
    for pr in &rep.pairs {
        table.push(vec![
            coords_label(&pr.a),
            coords_label(&pr.b),
            coords_label(&pr.value_a),
            coords_label(&pr.value_b),
            num(pr.delta),
            num(pr.theta),
            num(pr.quotient),
        ]);
    }
    Ok(Output { results, table })
}

fn simplex_point(ctx: &Ctx, field: &str, coords: &Option<Vec<f64>>) -> Result<SimplexPoint, CliError> {
    let c = coords
        .clone()
        .ok_or_else(|| CliError::validation(format!("params.{field}"), "required for this command"))?;
    if c.len() != ctx.p.support().len() {
        return Err(CliError::validation(
            format!("params.{field}"),
            format!("expected {} coordinates, got {}", ctx.p.support().len(), c.len()),
        ));
    }
    SimplexPoint::new(c, ctx.r.floor).map_err(|e| CliError::validation(format!("params.{field}"), e.to_string()))
}

fn kink(ctx: &Ctx) -> Result<Output, CliError> {
    let q = quantity(ctx, false)?;
    let a = simplex_point(ctx, "a", &ctx.r.a)?;
    let b = simplex_point(ctx, "b", &ctx.r.b)?;
    check_min("steps", ctx.r.steps, 4)?;
    let prof = kink_detector(&ctx.p, &q, &a, &b, ctx.r.steps, lab_options(ctx)).in_module("regularity-lab")?;
    let mut table = Table::new(&["t", "value", "flagged"]);
    let step = 1.0 / ctx.r.steps as f64;
    for (t, v) in prof.ts.iter().zip(&prof.values) {
        let flagged = prof.flags.iter().any(|f| (f.t - t).abs() <= step);
        table.push(vec![num(*t), num(*v), flagged.to_string()]);
    }
    let results = json!({"quantity": q.name(), "profile": to_value(&prof)});
    Ok(Output { results, table })
}

fn stability(ctx: &Ctx) -> Result<Output, CliError> {
    let dim = ctx.p.support().len();
    let centre = match &ctx.r.centre {
        Some(_) => simplex_point(ctx, "centre", &ctx.r.centre)?,
        None => SimplexPoint::uniform(dim),
    };
    let seed = seed(ctx)?;
    let probes = random_probes(&centre, ctx.r.radius, ctx.r.probes, seed, ctx.r.floor)
        .map_err(|e| CliError::validation("params.radius", e.to_string()))?;
    let opts = StabilityOptions {
        seed,
        width: ctx.r.width,
        ..StabilityOptions::default()
    };
    let tab = neighborhood_stability(&ctx.p, &centre, ctx.r.radius, &probes, opts, lab_options(ctx)).in_module("regularity-lab")?;
    let mut table = Table::new(&["role", "coords", "theta", "zeta", "c1", "tau", "kappa"]);
    let row = |role: &str, r: &StabilityRow| {
        vec![
            role.to_string(),
            coords_label(&r.coords),
            num(r.theta),
            num(r.zeta),
            num(r.c1),
            num(r.tau),
            r.kappa.map(num).unwrap_or_default(),
        ]
    };
    table.push(row("centre", &tab.centre));
    for p in &tab.probes {
        table.push(row("probe", p));
    }
    Ok(Output {
        results: json!({"table": to_value(&tab)}),
        table,
    })
}
