use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::json;

use rglasso::asv::{efficiency_table, glasso_asv, plugin_asv};
use rglasso::contamination::{ges_scan, plugin_if_flagged, DEFAULT_STEP};
use rglasso::glasso::SUPPORT_TOL;
use rglasso::influence::{evaluate, max_direction_unpenalized, GlassoInfluence};
use rglasso::linalg::sym_eigen_desc;
use rglasso::plugins::{finite_sample_estimate, plugin_cov};
use rglasso::{glasso_solve, sc_surface, support_permutation, PenaltySpec, PluginKind, QuadratureRule, SCExperiment};

use crate::config::{Resolved, Task};
use crate::output::{coordinate_columns, entry_columns, format_float, Table};
use crate::{CliError, TaskOutput};

fn penalty(r: &Resolved) -> PenaltySpec {
    r.penalty.expect("resolve checks the penalty")
}

fn grid(r: &Resolved) -> &[nalgebra::DVector<f64>] {
    r.grid.as_deref().expect("resolve builds the grid")
}

fn push_entries(row: &mut Vec<String>, m: &DMatrix<f64>) {
    let p = m.nrows();
    for i in 0..p {
        for j in 0..p {
            row.push(format_float(m[(i, j)]));
        }
    }
}

fn nodes_of(rule: &QuadratureRule, p: usize) -> f64 {
    match rule {
        QuadratureRule::GaussHermite { order } => (*order as f64).powi(p as i32),
        QuadratureRule::MonteCarlo { samples, .. } => *samples as f64,
    }
}

/// Amount of work a task will do, for dry runs.
pub(crate) fn plan(r: &Resolved) -> serde_json::Value {
    let p = r.model.dim();
    match r.task {
        Task::Solve => json!({ "source": if r.config.data.is_some() { "data" } else { "functional" }, "p": p }),
        Task::IfSurface => json!({ "grid_points": grid(r).len() }),
        Task::ScSurface => json!({
            "grid_points": grid(r).len(),
            "n": r.config.sc.n,
            "replications": r.config.sc.replications,
            "glasso_solves": r.config.sc.replications * (grid(r).len() + 1),
        }),
        Task::GesScan => {
            let (radii, dirs) = r.scan.as_ref().expect("resolve builds the scan");
            json!({ "points": radii.len() * dirs.len() })
        }
        Task::MaxDirection => json!({ "p": p }),
        Task::Asv | Task::EfficiencyTable => {
            let nodes: Vec<_> = r
                .kinds
                .iter()
                .map(|k| {
                    let q = r.config.quadrature_for(k).expect("resolve checks quadrature");
                    json!({ "kind": k.name(), "nodes": nodes_of(&q.rule, p) })
                })
                .collect();
            json!({ "kinds": nodes, "components": r.components.len() })
        }
    }
}

pub(crate) fn execute(r: &Resolved) -> Result<TaskOutput, CliError> {
    match r.task {
        Task::Solve => solve(r),
        Task::IfSurface => if_surface(r),
        Task::ScSurface => sc(r),
        Task::GesScan => ges(r),
        Task::MaxDirection => max_direction(r),
        Task::Asv => asv(r),
        Task::EfficiencyTable => efficiency(r),
    }
}

fn read_matrix(path: &Path, p: usize) -> Result<DMatrix<f64>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("data: {}: {e}", path.display())))?;
    let mut values = Vec::new();
    let mut rows = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Config(format!("data: {}: {e}", path.display())))?;
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            // a non-numeric first line is a header
            Err(_) if line == 0 => continue,
            Err(e) => return Err(CliError::Config(format!("data: {} line {}: {e}", path.display(), line + 1))),
            Ok(v) if v.len() != p => {
                return Err(CliError::Config(format!("data: {} line {}: {} columns, model has p = {p}", path.display(), line + 1, v.len())))
            }
            Ok(v) => {
                values.extend(v);
                rows += 1;
            }
        }
    }
    if rows == 0 {
        return Err(CliError::Config(format!("data: {} has no rows", path.display())));
    }
    Ok(DMatrix::from_row_slice(rows, p, &values))
}

fn solve(r: &Resolved) -> Result<TaskOutput, CliError> {
    let p = r.model.dim();
    let (s, source, n) = match &r.config.data {
        Some(path) => {
            let x = read_matrix(path, p)?;
            (finite_sample_estimate(&r.kind, &x)?, "data", Some(x.nrows()))
        }
        None if !r.kind.has_functional() => return Err(CliError::Config("data: fast-mcd needs a data file".into())),
        None => (plugin_cov(&r.kind, &r.model)?, "functional", None),
    };
    let est = glasso_solve(&s, &penalty(r))?;
    let mut table = Table::new(vec!["row".into(), "col".into(), "omega".into(), "in_support".into()]);
    for i in 0..p {
        for j in 0..p {
            table.rows.push(vec![(i + 1).to_string(), (j + 1).to_string(), format_float(est.omega[(i, j)]), est.in_support(i, j).to_string()]);
        }
    }
    let summary = json!({
        "kind": r.kind.name(),
        "source": source,
        "n": n,
        "lambda": est.lambda,
        "kkt_residual": est.kkt_residual,
        "objective": est.objective,
        "sweeps": est.sweeps,
        "support_size": est.support.iter().filter(|&&b| b).count(),
    });
    Ok(TaskOutput { table, summary })
}

fn if_surface(r: &Resolved) -> Result<TaskOutput, CliError> {
    let p = r.model.dim();
    let est = glasso_solve(&plugin_cov(&r.kind, &r.model)?, &penalty(r))?;
    let perm = support_permutation(&est, SUPPORT_TOL)?;
    let system = GlassoInfluence::new(&est, &perm)?;
    let evals = grid(r)
        .par_iter()
        .map(|z| plugin_if_flagged(&r.kind, &r.model, z, DEFAULT_STEP).map(|pif| evaluate(&system, &pif)))
        .collect::<rglasso::Result<Vec<_>>>()?;
    let mut header = coordinate_columns(p);
    header.extend(["norm", "plugin_norm", "stable"].map(String::from));
    header.extend(entry_columns("if", p));
    let mut table = Table::new(header);
    let mut unstable = 0;
    for ev in &evals {
        let mut row: Vec<String> = ev.z.iter().map(|&v| format_float(v)).collect();
        row.push(format_float(ev.norm));
        row.push(format_float(ev.plugin_if.norm()));
        row.push(ev.plugin_if.stable.to_string());
        unstable += usize::from(!ev.plugin_if.stable);
        push_entries(&mut row, &ev.glasso_if);
        table.rows.push(row);
    }
    let summary = json!({
        "kind": r.kind.name(),
        "lambda": est.lambda,
        "support_size": perm.s,
        "condition": system.condition(),
        "difference_step": if r.kind == PluginKind::Classical { None } else { Some(DEFAULT_STEP) },
        "unstable_points": unstable,
    });
    Ok(TaskOutput { table, summary })
}

fn sc(r: &Resolved) -> Result<TaskOutput, CliError> {
    let p = r.model.dim();
    let exp = SCExperiment {
        model: r.model.clone(),
        kind: r.kind,
        penalty: penalty(r),
        n: r.config.sc.n,
        replications: r.config.sc.replications,
        grid: grid(r).to_vec(),
        seed: r.config.seed,
    };
    let surface = sc_surface(&exp)?;
    let mut header = coordinate_columns(p);
    header.extend(["norm", "norm_stderr"].map(String::from));
    header.extend(entry_columns("sc", p));
    let mut table = Table::new(header);
    for pt in &surface.points {
        let mut row: Vec<String> = pt.z.iter().map(|&v| format_float(v)).collect();
        row.push(format_float(pt.norm));
        row.push(format_float(pt.norm_stderr));
        push_entries(&mut row, &pt.mean);
        table.rows.push(row);
    }
    let summary = json!({
        "kind": r.kind.name(),
        "lambda": exp.penalty.lambda,
        "n": exp.n,
        "replications": exp.replications,
        "used": surface.used,
        "dropped": surface.dropped,
        "experimental": surface.experimental,
    });
    Ok(TaskOutput { table, summary })
}

fn ges(r: &Resolved) -> Result<TaskOutput, CliError> {
    let p = r.model.dim();
    let (radii, dirs) = r.scan.as_ref().expect("resolve builds the scan");
    let scan = ges_scan(&r.kind, &r.model, radii, dirs)?;
    let mut header = vec!["direction".to_string(), "radius".to_string()];
    header.extend(coordinate_columns(p));
    header.extend(["norm", "stable"].map(String::from));
    let mut table = Table::new(header);
    for row in &scan.rows {
        let mut out = vec![(row.direction + 1).to_string(), format_float(row.radius)];
        out.extend(row.z.iter().map(|&v| format_float(v)));
        out.push(format_float(row.norm));
        out.push(row.stable.to_string());
        table.rows.push(out);
    }
    let summary = json!({
        "kind": r.kind.name(),
        "max_norm": scan.max_norm,
        "outer_ratio": scan.outer_ratio,
        "plateaued": scan.plateaued(),
    });
    Ok(TaskOutput { table, summary })
}

fn max_direction(r: &Resolved) -> Result<TaskOutput, CliError> {
    let p = r.model.dim();
    let est = glasso_solve(r.model.sigma(), &PenaltySpec::new(0.0)?)?;
    let md = max_direction_unpenalized(&est.omega)?;
    let (_, vecs) = sym_eigen_desc(&est.omega);
    let mut header = vec!["index".to_string(), "eigenvalue".to_string(), "g".to_string(), "chosen".to_string()];
    header.extend((1..=p).map(|j| format!("v{j}")));
    let mut table = Table::new(header);
    for (k, &l) in md.eigenvalues.iter().enumerate() {
        let mut row = vec![(k + 1).to_string(), format_float(l), format_float(l.powi(4) - 2.0 * l.powi(3)), (k == md.chosen).to_string()];
        if k == md.chosen {
            row.extend(md.direction.iter().map(|&v| format_float(v)));
        } else {
            row.extend(vecs.column(k).iter().map(|&v| format_float(v)));
        }
        table.rows.push(row);
    }
    let summary = json!({
        "max_squared_frobenius_norm": md.value,
        "chosen_eigenvalue_index": md.chosen + 1,
        "direction": md.direction,
    });
    Ok(TaskOutput { table, summary })
}

fn asv(r: &Resolved) -> Result<TaskOutput, CliError> {
    let p = r.model.dim();
    let kind = r.kinds[0];
    let q = r.config.quadrature_for(&kind)?;
    let plug = plugin_asv(&kind, &r.model, &q)?;
    let est = glasso_solve(&plugin_cov(&kind, &r.model)?, &penalty(r))?;
    let perm = support_permutation(&est, SUPPORT_TOL)?;
    let system = GlassoInfluence::new(&est, &perm)?;
    let g = glasso_asv(&system, &plug.matrix)?;
    let idx = |a: usize| ((a % p + 1).to_string(), (a / p + 1).to_string());
    let mut table = Table::new(["block", "row_i", "row_j", "col_i", "col_j", "value", "stderr"].map(String::from).to_vec());
    for a in 0..p * p {
        for b in 0..p * p {
            let ((ri, rj), (ci, cj)) = (idx(a), idx(b));
            let se = plug.stderr.as_ref().map(|s| format_float(s[(a, b)])).unwrap_or_default();
            table.rows.push(vec!["plugin".into(), ri, rj, ci, cj, format_float(plug.matrix[(a, b)]), se]);
        }
    }
    let support = perm.support_indices();
    for (x, &a) in support.iter().enumerate() {
        for (y, &b) in support.iter().enumerate() {
            let ((ri, rj), (ci, cj)) = (idx(a), idx(b));
            table.rows.push(vec!["glasso".into(), ri, rj, ci, cj, format_float(g[(x, y)]), String::new()]);
        }
    }
    let summary = json!({
        "kind": kind.name(),
        "lambda": est.lambda,
        "quadrature": q,
        "support_size": perm.s,
        "unstable_weight": plug.unstable_weight,
    });
    Ok(TaskOutput { table, summary })
}

fn efficiency(r: &Resolved) -> Result<TaskOutput, CliError> {
    let config = &r.config;
    let t = efficiency_table(&r.model, &penalty(r), &r.kinds, &r.components, |k| {
        config.quadrature_for(k).map_err(|e| rglasso::Error::Domain(e.message()))
    })?;
    let mut table = Table::new(["component", "kind", "asv", "efficiency", "mc_stderr", "method", "unstable_weight"].map(String::from).to_vec());
    for row in &t.rows {
        table.rows.push(vec![
            format!("({},{})", row.component.0 + 1, row.component.1 + 1),
            row.kind.name().to_string(),
            format_float(row.asv),
            format_float(row.efficiency),
            row.mc_stderr.map(format_float).unwrap_or_default(),
            row.method.clone(),
            format_float(row.unstable_weight),
        ]);
    }
    let summary = json!({ "lambda": t.lambda, "rows": t.rows.len() });
    Ok(TaskOutput { table, summary })
}
