//! One runner per experiment. Each returns its CSV table, assertions and summary stats.

use anyhow::{bail, Context};
use gmtlab_core::density::{
    bowtie_check, check_polyball_lower_bound, density_experiment, fubini_equivalence_check, pb_inclusion_check,
    polyball_norm_gradient, stripe_check, GraphPatch, Polyball,
};
use gmtlab_core::fibration::{
    check_phi_lower_bound, check_z_sandwich, coarea_check_pi1, coarea_check_pi2, jacobians_sigma, jacobians_sigma_hat,
    sample_ball, SigmaPoint, SMALL_DIAMETER_GATE,
};
use gmtlab_core::grassmann::{binet_cauchy_best_minor, binomial, local_frame};
use gmtlab_core::planefield::FRAME_BALL_GATE;
use gmtlab_core::setlib::{lebesgue_measure, DEFAULT_SLICE_SAMPLES};
use gmtlab_core::{AxisBox, FrameField, Plane, RngKey, Sampler, SetOracle, Vector};
use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{slab, Config, Experiment, SetSpec};
use crate::output::{float, Assertion, Gate, LambdaInfo, Table};

pub struct Outcome {
    pub table: Table,
    pub assertions: Vec<Assertion>,
    pub stats: serde_json::Value,
    pub lambda: Option<LambdaInfo>,
    pub gates: Vec<Gate>,
}

impl Outcome {
    fn new(table: Table) -> Self {
        Self {
            table,
            assertions: Vec::new(),
            stats: json!({}),
            lambda: None,
            gates: Vec::new(),
        }
    }

    fn with_frame(mut self, ff: &FrameField) -> Self {
        self.lambda = Some(LambdaInfo {
            declared: ff.field().lambda_decl(),
            field_estimate: ff.lambda_field_hat(),
            frame_estimate: ff.lambda_frame_hat(),
            effective: ff.lambda_eff(),
        });
        self.gates.push(Gate {
            name: "frame_ball".into(),
            value: ff.field().lambda_decl() * ff.radius(),
            limit: FRAME_BALL_GATE,
            note: "Lambda * radius bounds d(W(x), W_0(x0)) on the frame ball".into(),
        });
        self
    }
}

pub fn run(exp: Experiment, cfg: &Config, key: RngKey, samples: Option<usize>) -> anyhow::Result<Outcome> {
    let samples = samples.or(cfg.params.samples).unwrap_or(DEFAULT_SLICE_SAMPLES);
    match exp {
        Experiment::Frames => frames(cfg, key),
        Experiment::Jacobians => jacobians(cfg, key),
        Experiment::Coarea => coarea(cfg, key, samples),
        Experiment::Sandwich => sandwich(cfg, key, samples),
        Experiment::Stripe => stripe(cfg, key, samples),
        Experiment::Bowtie => bowtie(cfg, key, samples),
        Experiment::Density => density(cfg, key),
        Experiment::Fubini => fubini(cfg, key, samples),
        Experiment::Polyball => polyball(cfg, key, samples),
    }
}

fn b(x: bool) -> String {
    x.to_string()
}

fn coords(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}_{i}")).collect()
}

fn frames(cfg: &Config, key: RngKey) -> anyhow::Result<Outcome> {
    let p = &cfg.params;
    let count = p.points.unwrap_or(10_000);
    let mut table = Table::new([
        "index",
        "n",
        "m",
        "base_distance",
        "span_residual",
        "gram_residual",
        "best_minor",
        "minor_bound",
    ]);
    let mut index = 0usize;
    let (mut worst_span, mut worst_gram, mut worst_minor) = (0.0f64, 0.0f64, f64::INFINITY);
    for (di, [n, m]) in p.dims.iter().copied().enumerate() {
        if m == 0 || m >= n {
            bail!("dims entry [{n}, {m}] needs 0 < m < n");
        }
        let dkey = key.named("frames").child(di as u64);
        let rows = (0..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = dkey.child(i as u64).rng(0);
                let w_ref = Plane::random(n, m, &mut rng);
                let basis = w_ref.basis();
                let d = p.max_distance * rng.random::<f64>();
                let w = w_ref.random_at_distance(d, &mut rng);
                let f = local_frame(&w_ref, &basis, &w)?;
                let span = f.span().distance(&w)?;
                let (_, minor) = binet_cauchy_best_minor(&f);
                Ok((d, span, f.gram_residual(), minor))
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        let bound = (binomial(n, m) as f64).powf(-0.5);
        for (d, span, gram, minor) in rows {
            worst_span = worst_span.max(span);
            worst_gram = worst_gram.max(gram);
            worst_minor = worst_minor.min(minor - bound);
            table.push(vec![
                index.to_string(),
                n.to_string(),
                m.to_string(),
                float(d),
                float(span),
                float(gram),
                float(minor),
                float(bound),
            ]);
            index += 1;
        }
    }
    let mut rng = key.named("frames.lines").rng(0);
    let line_err = (0..100)
        .map(|_| {
            let theta = std::f64::consts::PI * (2.0 * rng.random::<f64>() - 1.0);
            let d = Plane::line_2d(theta).distance(&Plane::line_2d(0.0)).expect("lines");
            (d - theta.sin().abs()).abs()
        })
        .fold(0.0, f64::max);
    let mut out = Outcome::new(table);
    out.assertions = vec![
        Assertion::at_most("line distance equals |sin theta|", line_err, 1e-9, "100 random angles"),
        Assertion::at_most("local frame spans W", worst_span, 1e-9, "max d(span F, W)"),
        Assertion::at_most("local frame orthonormal", worst_gram, 1e-9, "max |F^T F - I|"),
        Assertion::at_least(
            "Binet-Cauchy best minor",
            worst_minor,
            -1e-12,
            "min over frames of best minor - C(n,m)^{-1/2}",
        ),
    ];
    out.stats = json!({ "planes": index, "max_span_residual": worst_span, "max_gram_residual": worst_gram });
    Ok(out)
}

fn jacobians(cfg: &Config, key: RngKey) -> anyhow::Result<Outcome> {
    let ff = cfg.frame_field(key)?;
    let p = &cfg.params;
    let (n, m) = (ff.n(), ff.m());
    let count = p.points.unwrap_or(10_000);
    let lambda = ff.lambda_eff();
    let reach = ff.radius() / 4.0;
    let t_max = if lambda > 0.0 { (p.lambda_t_gate / lambda).min(reach) } else { reach };
    let rows = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = key.named("jacobians").child(i as u64).rng(0);
            let x = ff.x0() + sample_ball(n, reach, &mut rng);
            let t = sample_ball(m, t_max, &mut rng);
            let y = sample_ball(n - m, t_max, &mut rng);
            let s = SigmaPoint::on_sigma(&ff, x.clone(), t.clone())?;
            let (j1, j2) = jacobians_sigma(&ff, &s)?;
            let h = SigmaPoint::on_sigma_hat(&ff, x, t, y)?;
            let (j13, j23) = jacobians_sigma_hat(&ff, &h)?;
            Ok((s.separation(), j1, j2, j13, j23))
        })
        .collect::<gmtlab_core::Result<Vec<_>>>()?;
    let mut table = Table::new([
        "index",
        "separation",
        "j_pi1",
        "lb_pi1",
        "j_pi2",
        "lb_pi2",
        "j_pi13",
        "lb_pi13",
        "j_pi23",
        "within_bounds",
    ]);
    let (mut v1, mut v2, mut v13) = (0usize, 0usize, 0usize);
    let mut min_pi2 = f64::INFINITY;
    let mut flat_err = 0.0f64;
    let flat = 2f64.powf(-((n - m) as f64) / 2.0);
    for (i, (d, j1, j2, j13, j23)) in rows.iter().enumerate() {
        v1 += usize::from(!j1.within_bounds);
        v2 += usize::from(!j2.within_bounds);
        v13 += usize::from(!j13.within_bounds);
        min_pi2 = min_pi2.min(j2.value);
        flat_err = flat_err.max((j1.value - flat).abs()).max((j2.value - flat).abs());
        table.push(vec![
            i.to_string(),
            float(*d),
            float(j1.value),
            float(j1.lower_bound),
            float(j2.value),
            float(j2.lower_bound),
            float(j13.value),
            float(j13.lower_bound),
            float(j23.value),
            b(j1.within_bounds && j2.within_bounds && j13.within_bounds),
        ]);
    }
    let mut out = Outcome::new(table).with_frame(&ff);
    out.gates.push(Gate {
        name: "lambda_t".into(),
        value: lambda * t_max,
        limit: p.lambda_t_gate,
        note: "largest Lambda * |t| of the sampled fiber points".into(),
    });
    out.assertions = vec![
        Assertion::at_most("pi1 jacobian two-sided bound", v1 as f64, 0.0, "violations"),
        Assertion::at_most("pi2 jacobian two-sided bound", v2 as f64, 0.0, "violations"),
        Assertion::at_least("pi2 jacobian positive", min_pi2, 1e-8, "min J pi2"),
        Assertion::at_most("pi1 x pi3 jacobian bound on the lifted space", v13 as f64, 0.0, "violations"),
    ];
    if ff.field().lambda_decl() == 0.0 {
        out.assertions.push(Assertion::at_most(
            "constant field factor 2^{-(n-m)/2}",
            flat_err,
            gmtlab_core::fibration::JACOBIAN_TOL,
            "max |J - 2^{-(n-m)/2}|",
        ));
    }
    out.stats = json!({ "points": count, "t_max": t_max, "min_j_pi2": min_pi2 });
    Ok(out)
}

fn comparison_row(table: &mut Table, name: &str, c: &gmtlab_core::fibration::CoareaComparison) {
    table.push(vec![
        name.into(),
        float(c.lhs.value),
        float(c.lhs.std_error),
        float(c.rhs.value),
        float(c.rhs.std_error),
        float(c.z_score),
        b(c.agrees),
    ]);
}

fn coarea(cfg: &Config, key: RngKey, samples: usize) -> anyhow::Result<Outcome> {
    let ff = cfg.frame_field(key)?;
    let set = cfg.set(key)?;
    let s = Sampler::mc(samples, key.named("coarea"));
    let c1 = coarea_check_pi1(&set, &set, &ff, &s.with_key(key.named("coarea.pi1")))?;
    let c2 = coarea_check_pi2(&set, &set, &ff, cfg.params.delta, &s.with_key(key.named("coarea.pi2")))?;
    let mut table = Table::new(["check", "lhs", "lhs_se", "rhs", "rhs_se", "z_score", "agrees"]);
    comparison_row(&mut table, "pi1", &c1);
    comparison_row(&mut table, "pi2", &c2);
    let mut out = Outcome::new(table).with_frame(&ff);
    out.assertions = vec![
        Assertion::at_most("coarea identity through pi1", c1.z_score, 3.0, "z score of LHS - RHS"),
        Assertion::at_most("coarea identity through pi2 x pi3", c2.z_score, 3.0, "z score of LHS - RHS"),
    ];
    out.stats = json!({ "pi1": c1, "pi2": c2, "delta": cfg.params.delta, "samples": samples });
    Ok(out)
}

fn sandwich(cfg: &Config, key: RngKey, samples: usize) -> anyhow::Result<Outcome> {
    let ff = cfg.frame_field(key)?;
    let set = cfg.set(key)?;
    let p = &cfg.params;
    let rho = p.rho.unwrap_or(p.delta);
    let s = Sampler::mc(samples, key.named("sandwich"));
    let rep = check_z_sandwich(&set, &ff, p.points.unwrap_or(50), p.delta, rho, p.epsilon, &s)?;
    let lb = check_phi_lower_bound(&set, &set, &ff, p.delta, p.epsilon, &s.with_key(key.named("phi_lower")))?;
    let n = ff.n();
    let mut header = vec!["index".to_string()];
    header.extend(coords("u", n));
    header.extend(
        ["y", "y_se", "z", "z_se", "lower", "upper", "lower_ok", "upper_ok"]
            .iter()
            .map(|s| s.to_string()),
    );
    let mut table = Table::new(header);
    let (mut lo_v, mut hi_v) = (0usize, 0usize);
    for (i, r) in rep.rows.iter().enumerate() {
        lo_v += usize::from(!r.lower_ok);
        hi_v += usize::from(!r.upper_ok);
        let mut row = vec![i.to_string()];
        row.extend(r.u.iter().map(|x| float(*x)));
        row.extend([
            float(r.y.value),
            float(r.y.std_error),
            float(r.z.value),
            float(r.z.std_error),
            float(r.lower),
            float(r.upper),
            b(r.lower_ok),
            b(r.upper_ok),
        ]);
        table.push(row);
    }
    let mut out = Outcome::new(table).with_frame(&ff);
    out.gates.push(Gate {
        name: "small_diameter".into(),
        value: rep.gate_value.max(lb.gate_value),
        limit: SMALL_DIAMETER_GATE,
        note: "engineering stand-in for the unquantified small-scale threshold".into(),
    });
    out.assertions = vec![
        Assertion::at_most("Z sandwich lower side", lo_v as f64, 0.0, "violations with 3 sigma slack"),
        Assertion::at_most("Z sandwich upper side", hi_v as f64, 0.0, "violations with 3 sigma slack"),
        Assertion::new(
            "phi lower bound by the Y integral",
            lb.holds,
            lb.lhs.value,
            lb.bound,
            "LHS against (1 - eps) 2^{-(n-m)} int_B Y, 3 sigma slack",
        ),
    ];
    out.stats = json!({
        "u_samples": rep.rows.len(),
        "violations": rep.violations,
        "near_zero_fraction": rep.near_zero_fraction,
        "lower_bound": lb,
        "rho": rho,
    });
    Ok(out)
}

/// Polyball from `[params]`: center defaults to the frame anchor, radius to the largest
/// value allowed by the `Lambda r` gate and the frame ball.
fn configured_polyball(cfg: &Config, ff: &FrameField) -> anyhow::Result<Polyball> {
    let p = &cfg.params;
    let center = p.center.clone().map(Vector::from_vec).unwrap_or_else(|| ff.x0().clone());
    let room = (ff.radius() - (&center - ff.x0()).norm()) / 2f64.sqrt();
    if room <= 0.0 {
        bail!("polyball center lies outside the frame ball");
    }
    let lambda = ff.lambda_eff();
    let r = match p.r {
        Some(r) => r,
        None if lambda > 0.0 => (p.lambda_r_gate / lambda).min(0.99 * room),
        None => 0.99 * room,
    };
    Ok(Polyball::of_field(ff.field(), center, r)?)
}

fn stripe(cfg: &Config, key: RngKey, samples: usize) -> anyhow::Result<Outcome> {
    let ff = cfg.frame_field(key)?;
    let p = &cfg.params;
    let pb = configured_polyball(cfg, &ff)?;
    let r = pb.radius();
    let u = p.u.clone().map(Vector::from_vec).unwrap_or_else(|| pb.center().clone());
    let cs = if p.stripe_c.is_empty() { vec![p.epsilon * r / 2.0] } else { p.stripe_c.clone() };
    let constant = ff.field().lambda_decl() == 0.0;
    let mut table = Table::new([
        "index",
        "c",
        "r",
        "epsilon",
        "height",
        "lambda_r",
        "volume",
        "volume_se",
        "flat_volume",
        "bound",
        "holds",
    ]);
    let mut out_assert = Vec::new();
    for (i, c) in cs.iter().enumerate() {
        let s = Sampler::mc(samples, key.named("stripe").child(i as u64));
        let rep = stripe_check(&pb, &ff, &u, *c, p.epsilon, p.lambda_r_gate, &s)?;
        table.push(vec![
            i.to_string(),
            float(*c),
            float(r),
            float(p.epsilon),
            float(rep.height),
            float(rep.lambda_r),
            float(rep.volume.value),
            float(rep.volume.std_error),
            float(rep.flat_volume),
            float(rep.bound),
            b(rep.holds),
        ]);
        out_assert.push(Assertion::at_least(
            "stripe volume lower bound",
            rep.volume.value + 3.0 * rep.volume.std_error,
            rep.bound,
            format!("c = {c}"),
        ));
        if constant {
            out_assert.push(Assertion::at_most(
                "stripe volume equals its product form",
                (rep.volume.value - rep.flat_volume).abs(),
                3.0 * rep.volume.std_error,
                format!("c = {c}, constant field"),
            ));
        }
    }
    let mut out = Outcome::new(table).with_frame(&ff);
    out.gates.push(Gate {
        name: "lambda_r".into(),
        value: ff.lambda_eff() * r,
        limit: p.lambda_r_gate,
        note: "Lambda * r for the polyball".into(),
    });
    out.assertions = out_assert;
    out.stats = json!({ "r": r, "u": u.as_slice(), "samples": samples });
    Ok(out)
}

fn bowtie(cfg: &Config, key: RngKey, samples: usize) -> anyhow::Result<Outcome> {
    let p = &cfg.params;
    let [n, m] = p.patch_dims;
    if m == 0 || m >= n {
        bail!("patch_dims [{n}, {m}] needs 0 < m < n");
    }
    let count = p.points.unwrap_or(100);
    let reports = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = key.named("bowtie").child(i as u64).rng(0);
            let tau = p.tau_max * rng.random::<f64>();
            let patch = GraphPatch::random(n, m, tau, p.patch_radius, &mut rng);
            bowtie_check(&patch, tau, 200, &Sampler::mc(samples, key.named("bowtie.area").child(i as u64)))
        })
        .collect::<gmtlab_core::Result<Vec<_>>>()?;
    let mut table = Table::new([
        "index",
        "tau",
        "area",
        "area_se",
        "diameter",
        "bound",
        "holds",
        "min_projected_ratio",
        "injective",
    ]);
    let (mut bad_area, mut bad_inj) = (0usize, 0usize);
    for (i, r) in reports.iter().enumerate() {
        bad_area += usize::from(!r.holds);
        bad_inj += usize::from(!r.injective);
        table.push(vec![
            i.to_string(),
            float(r.tau),
            float(r.area.value),
            float(r.area.std_error),
            float(r.diameter),
            float(r.bound),
            b(r.holds),
            float(r.min_projected_ratio),
            b(r.injective),
        ]);
    }
    let mut out = Outcome::new(table);
    out.assertions = vec![
        Assertion::at_most("bow-tie area bound", bad_area as f64, 0.0, "patches with area - 3 sigma above the bound"),
        Assertion::at_most("bow-tie projection is injective", bad_inj as f64, 0.0, "patches below sqrt(1 - tau^2)"),
    ];
    out.stats = json!({ "patches": count, "dims": [n, m] });
    Ok(out)
}

fn density(cfg: &Config, key: RngKey) -> anyhow::Result<Outcome> {
    let field = cfg.field()?;
    let set = cfg.set(key)?;
    let p = &cfg.params;
    let exp = density_experiment(
        &set,
        &field,
        p.points.unwrap_or(200),
        &p.r_grid,
        p.r_floor,
        p.margin,
        key.named("density"),
    )?;
    let n = field.n();
    let mut header = vec!["index".to_string()];
    header.extend(coords("x", n));
    header.extend(coords("theta", p.r_grid.len()));
    header.push("max_theta".into());
    let mut table = Table::new(header);
    for r in &exp.rows {
        let mut row = vec![r.index.to_string()];
        row.extend(r.x.iter().map(|x| float(*x)));
        row.extend(r.theta.iter().map(|x| float(*x)));
        row.push(float(r.max_theta));
        table.push(row);
    }
    let last = exp.prefixes.last().context("empty r_grid")?;
    let mut out = Outcome::new(table);
    out.assertions = vec![
        Assertion::new(
            "density failure fraction nonincreasing in r_min",
            exp.nonincreasing,
            f64::from(u8::from(exp.nonincreasing)),
            1.0,
            "within 2 standard errors between consecutive radii",
        ),
        Assertion::at_most(
            "density failure fraction at the finest radius",
            last.below_fraction,
            p.max_fraction,
            format!("fraction with max Theta below {:.6}", exp.threshold),
        ),
    ];
    out.stats = json!({
        "threshold": exp.threshold,
        "below_threshold_fraction": last.below_fraction,
        "prefixes": exp.prefixes,
        "r_grid": p.r_grid,
    });
    Ok(out)
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / k, ly.iter().sum::<f64>() / k);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn fubini(cfg: &Config, key: RngKey, samples: usize) -> anyhow::Result<Outcome> {
    let ff = cfg.frame_field(key)?;
    let p = &cfg.params;
    let family: Vec<(f64, SetOracle)> = if p.widths.is_empty() {
        vec![(f64::NAN, cfg.set(key)?)]
    } else {
        match &cfg.set {
            Some(SetSpec::Slab { lo, hi, axis, .. }) => p
                .widths
                .iter()
                .map(|w| Ok((*w, slab(lo, hi, *axis, *w)?)))
                .collect::<anyhow::Result<_>>()?,
            _ => bail!("params.widths needs a set of kind \"slab\""),
        }
    };
    let mut table = Table::new([
        "index",
        "width",
        "lebesgue",
        "lebesgue_se",
        "mean_slice_mass",
        "mean_slice_mass_se",
        "vanish_together",
    ]);
    let mut assertions = Vec::new();
    let (mut leb, mut mass) = (Vec::new(), Vec::new());
    for (i, (w, set)) in family.iter().enumerate() {
        let s = Sampler::mc(samples, key.named("fubini").child(i as u64));
        let rep = fubini_equivalence_check(set, &ff, p.delta, &s)?;
        table.push(vec![
            i.to_string(),
            float(*w),
            float(rep.lebesgue.value),
            float(rep.lebesgue.std_error),
            float(rep.mean_slice_mass.value),
            float(rep.mean_slice_mass.std_error),
            b(rep.vanish_together),
        ]);
        assertions.push(Assertion::new(
            "Lebesgue-null exactly when slice-null",
            rep.vanish_together,
            f64::from(u8::from(rep.vanish_together)),
            1.0,
            format!("set {i}"),
        ));
        leb.push(rep.lebesgue.value);
        mass.push(rep.mean_slice_mass.value);
    }
    let mut stats = json!({ "delta": p.delta, "samples": samples });
    if p.widths.len() >= 2 {
        let (sl, sm) = (slope(&p.widths, &leb), slope(&p.widths, &mass));
        assertions.push(Assertion::at_most(
            "Lebesgue measure linear in width",
            (sl - 1.0).abs(),
            p.slope_tol,
            format!("log-log slope {sl:.4}"),
        ));
        assertions.push(Assertion::at_most(
            "mean slice mass linear in width",
            (sm - 1.0).abs(),
            p.slope_tol,
            format!("log-log slope {sm:.4}"),
        ));
        stats["lebesgue_slope"] = json!(sl);
        stats["slice_mass_slope"] = json!(sm);
    }
    let mut out = Outcome::new(table).with_frame(&ff);
    out.assertions = assertions;
    out.stats = stats;
    Ok(out)
}

fn polyball(cfg: &Config, key: RngKey, samples: usize) -> anyhow::Result<Outcome> {
    let ff = cfg.frame_field(key)?;
    let p = &cfg.params;
    let mut table = Table::new(["check", "index", "value", "reference", "std_error", "ok"]);
    let mut push = |check: &str, i: usize, value: f64, reference: f64, se: f64, ok: bool| {
        table.push(vec![check.into(), i.to_string(), float(value), float(reference), float(se), b(ok)]);
    };
    let mut assertions = Vec::new();

    let mut worst_z = 0.0f64;
    for (i, [n, m]) in p.dims.iter().copied().enumerate() {
        let mut rng = key.named("polyball.volume").child(i as u64).rng(0);
        let w = Plane::random(n, m, &mut rng);
        let pb = Polyball::new(Vector::zeros(n), 1.0, w)?;
        let est = lebesgue_measure(&pb.as_set(), &Sampler::mc(samples, key.named("polyball.mc").child(i as u64)))?;
        let z = (est.value - pb.volume()).abs() / est.std_error;
        worst_z = worst_z.max(z);
        push("volume", i, est.value, pb.volume(), est.std_error, z <= 3.0);
    }
    assertions.push(Assertion::at_most("polyball volume alpha(m) alpha(n-m) r^n", worst_z, 3.0, "max z score"));

    let pb = configured_polyball(cfg, &ff)?;
    let grads = p.points.unwrap_or(10_000);
    let mut rng = key.named("polyball.gradient").rng(0);
    let (mut worst_grad, mut g_idx) = (0.0f64, 0usize);
    let scale = pb.radius();
    let cube = AxisBox::cube(pb.center().as_slice(), 2.0 * scale);
    while g_idx < grads {
        let x = cube.sample(&mut rng);
        let d = &x - pb.center();
        let pz = pb.plane().project(&d).norm();
        let qz = (&d - pb.plane().project(&d)).norm();
        if (pz - qz).abs() <= 1e-3 * scale {
            continue;
        }
        let g = polyball_norm_gradient(&pb, &x, 1e-6 * scale);
        let err = (g - 1.0).abs();
        worst_grad = worst_grad.max(err);
        push("gradient", g_idx, g, 1.0, 0.0, err <= 1e-6);
        g_idx += 1;
    }
    assertions.push(Assertion::at_most("polyball norm has unit gradient", worst_grad, 1e-6, "max ||grad nu| - 1|"));

    let lr = ff.lambda_eff() * pb.radius();
    let bases = 100usize;
    let per = (grads / bases).max(1);
    let mut rng = key.named("polyball.inclusion").rng(0);
    let xs: Vec<Vector> = (0..bases).map(|_| pb.sample(&mut rng)).collect();
    let reps = xs
        .par_iter()
        .enumerate()
        .map(|(i, x)| pb_inclusion_check(&pb, &ff, x, per, key.named("polyball.inclusion").child(i as u64)))
        .collect::<gmtlab_core::Result<Vec<_>>>()?;
    let mut violations = 0usize;
    for (i, r) in reps.iter().enumerate() {
        violations += r.violations;
        push("inclusion", i, r.max_distance, r.bound, 0.0, r.violations == 0);
    }
    assertions.push(Assertion::at_most(
        "polyball slice lies in B(x, r(1+t) + 8 m Lambda r^2)",
        violations as f64,
        0.0,
        format!("{} samples, Lambda r = {lr:.3e}", bases * per),
    ));

    if cfg.set.is_some() {
        let set = cfg.set(key)?;
        let rep = check_polyball_lower_bound(
            &pb,
            &set,
            &ff,
            p.epsilon,
            p.c,
            p.lambda_r_gate,
            p.delta,
            &Sampler::mc(samples, key.named("polyball.lower")),
        )?;
        push("lower_bound", 0, rep.lhs.value, rep.rhs, rep.lhs.std_error, rep.holds);
        assertions.push(Assertion::at_least(
            "polyball integral of Y bounded below",
            rep.lhs.value + 3.0 * rep.lhs.std_error,
            rep.rhs,
            format!("(1 - c eps) alpha(m) r^m L(C_W), c = {}", p.c),
        ));
    }
    let mut out = Outcome::new(table).with_frame(&ff);
    out.gates.push(Gate {
        name: "lambda_r".into(),
        value: lr,
        limit: p.lambda_r_gate,
        note: "Lambda * r for the polyball".into(),
    });
    out.assertions = assertions;
    out.stats = json!({ "r": pb.radius(), "center": pb.center().as_slice() });
    Ok(out)
}
