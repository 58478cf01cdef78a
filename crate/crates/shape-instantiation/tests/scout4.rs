use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shape_instantiation::phantom::{generate, PhantomSpec};
use shape_instantiation::scanplane::{
    build_contour_sequence, fit_weighted_plane, perturb_plane, PlanePerturbation, ScanPlane,
};
use shape_instantiation::spca::{spca, vertex_contributions, SparsityTarget, SpcaConfig};
use shape_instantiation::ssm::{
    center_normalize, shape_variation, Normalization, ShapeSequence3D,
};
use shape_instantiation::validate::{loocv, sweep_components, CellOutcome, RegressorSpec};

fn measured(shapes: &ShapeSequence3D, seed: u64, s: f64) -> ShapeSequence3D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = shapes
        .frames()
        .iter()
        .map(|frame| {
            frame
                .iter()
                .map(|p| {
                    Point3::new(
                        p.x + rng.gen_range(-s..s),
                        p.y + rng.gen_range(-s..s),
                        p.z + rng.gen_range(-s..s),
                    )
                })
                .collect()
        })
        .collect();
    ShapeSequence3D::new(frames, shapes.connectivity().to_vec()).unwrap()
}

fn optimal_plane(shapes: &ShapeSequence3D) -> ScanPlane {
    let design = shapes.flatten();
    let (normalized, _) = center_normalize(&design.values, Normalization::CenterUnitNorm).unwrap();
    let count =
        ((0.075 * shapes.n_vertices() as f64).round() as usize).clamp(1, shapes.n_vertices());
    let cfg = SpcaConfig::default()
        .with_components(1)
        .with_ridge_lambda(1e-4)
        .with_sparsity(SparsityTarget::NonZeroCount(count));
    let out = spca(&normalized, &cfg).unwrap();
    let contrib = vertex_contributions(&out.loadings, 0).unwrap();
    let mut points: Vec<Point3<f64>> = Vec::new();
    let mut weights = Vec::new();
    for frame in shapes.frames() {
        for &v in &contrib.selected {
            points.push(frame[v]);
            weights.push(contrib.contributions[v]);
        }
    }
    fit_weighted_plane(&points, &weights).unwrap()
}

#[test]
fn scout_sparse_contours() {
    let spec = PhantomSpec::default();
    let truth = generate(&spec).unwrap();
    let ticks: Vec<usize> = (1..=18).collect();

    for s in [0.05, 0.1] {
        let shapes = measured(&truth, 7, s);
        let n = shapes.n_frames();
        let vars: Vec<f64> = (1..n - 1)
            .map(|t| shape_variation(&shapes, t).unwrap())
            .collect();
        let plane = optimal_plane(&shapes);
        for num_x in [12usize, 16, 24] {
            println!("=== s={s} num_x={num_x} ===");
            let contours = build_contour_sequence(&shapes, &plane, num_x).unwrap();

            let plsr = sweep_components(
                &contours,
                &shapes,
                &RegressorSpec::Plsr { components: 1 },
                &ticks,
            )
            .unwrap();
            let mut line = String::from("plsr:");
            for (k, m) in ticks.iter().enumerate() {
                match plsr.cell_mean(k) {
                    Some(mean) => line.push_str(&format!(" {m}:{mean:.3}")),
                    None => line.push_str(&format!(" {m}:fail")),
                }
            }
            println!("{line}");
            let ps = plsr.per_frame_spread();
            let best_plsr_1_8 = (0..8.min(ticks.len()))
                .filter(|k| match &plsr.cells[*k].outcome {
                    CellOutcome::PerFrame { outcomes } => {
                        outcomes.iter().all(|o| o.error_mm().is_some())
                    }
                    _ => false,
                })
                .filter_map(|k| plsr.cell_mean(k))
                .fold(f64::INFINITY, f64::min);

            let mut best: Option<(f64, usize, f64)> = None;
            for ratio in [0.3, 1.0, 3.0, 10.0] {
                let grid = sweep_components(
                    &contours,
                    &shapes,
                    &RegressorSpec::Kplsr {
                        components: 1,
                        ratio,
                    },
                    &ticks,
                )
                .unwrap();
                let mut line = format!("kplsr r={ratio}:");
                for (k, m) in ticks.iter().enumerate() {
                    let failures = match &grid.cells[k].outcome {
                        CellOutcome::PerFrame { outcomes } => {
                            outcomes.iter().filter(|o| o.error_mm().is_none()).count()
                        }
                        CellOutcome::Missing { .. } => n,
                    };
                    match grid.cell_mean(k) {
                        Some(mean) if failures == 0 => {
                            line.push_str(&format!(" {m}:{mean:.3}"));
                            if best.is_none() || mean < best.unwrap().2 {
                                best = Some((ratio, *m, mean));
                            }
                        }
                        Some(mean) => line.push_str(&format!(" {m}:({mean:.3}/f{failures})")),
                        None => line.push_str(&format!(" {m}:fail")),
                    }
                }
                let ks = grid.per_frame_spread();
                let wins = ks
                    .iter()
                    .zip(&ps)
                    .filter(|(k, p)| match (k.std, p.std) {
                        (Some(a), Some(b)) => a <= b,
                        _ => false,
                    })
                    .count();
                println!("{line}");
                println!("  spread wins: {wins}/{}", ks.len());
            }
            let (br, bm, bmean) = best.unwrap();
            println!(
                "best plsr(1-8) {best_plsr_1_8:.4}; best kplsr r={br} M={bm} {bmean:.4} -> kplsr {} plsr",
                if bmean < best_plsr_1_8 { "BEATS" } else { "LOSES to" }
            );

            let grid = sweep_components(
                &contours,
                &shapes,
                &RegressorSpec::Kplsr {
                    components: 1,
                    ratio: br,
                },
                &[bm],
            )
            .unwrap();
            if let CellOutcome::PerFrame { outcomes } = &grid.cells[0].outcome {
                let below = (1..n - 1)
                    .filter(|&t| {
                        outcomes[t]
                            .error_mm()
                            .map(|e| e < vars[t - 1])
                            .unwrap_or(false)
                    })
                    .count();
                println!("below variation: {below}/{} interior", n - 2);
            }

            // deviation sweep around a central generic plane
            let base =
                ScanPlane::from_parts(Point3::origin(), Vector3::x(), Vector3::y()).unwrap();
            let central = perturb_plane(&base, &PlanePerturbation::new(14.0, 9.0, 0.0));
            let spec_r = RegressorSpec::Kplsr {
                components: bm,
                ratio: br,
            };
            let mut means = Vec::new();
            let mut labels = Vec::new();
            for pose in PlanePerturbation::axis_sweep_preset() {
                let moved = perturb_plane(&central, &pose);
                match build_contour_sequence(&shapes, &moved, num_x) {
                    Err(e) => println!("  {}: MISSING {e}", pose.label()),
                    Ok(c) => match loocv(&c, &shapes, &spec_r) {
                        Err(e) => println!("  {}: ERR {e}", pose.label()),
                        Ok(report) => {
                            means.push(report.mean_error().unwrap_or(f64::NAN));
                            labels.push(pose.label());
                        }
                    },
                }
            }
            let baseline = means[0];
            let (imax, max) = means
                .iter()
                .cloned()
                .enumerate()
                .fold((0, 0.0f64), |acc, (i, m)| if m > acc.1 { (i, m) } else { acc });
            println!(
                "deviation baseline {baseline:.4} max {max:.4} ({}) ratio {:.3}",
                labels[imax],
                max / baseline
            );
        }
    }
}
