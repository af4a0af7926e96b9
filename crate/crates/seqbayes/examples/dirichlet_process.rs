//! Dirichlet-process conjugacy and projective consistency.
//!
//! Run with: cargo run --example dirichlet_process
//!
//! A DP with base measure alpha updates to alpha plus one unit atom per
//! observation. Projecting onto any finite partition gives an ordinary
//! Dirichlet whose parameters are cell masses, and the square commutes: DP
//! update then project equals project then add-one-count. Coarsening the
//! partition commutes with updates too, which is the projective-diagram
//! story, and truncated stick-breaking draws match the analytic moments.

use seqbayes::dirichlet::{
    check_projective, count_update, dp_posterior, project, projection_moment_report,
    stick_breaking_sample, sticks_for_bias, truncation_bias, DiffuseBase, DirichletMeasure,
    Location, Partition,
};

fn main() -> seqbayes::Result<()> {
    // The three-label case: alpha = (1,1,1), observe label 2.
    let alpha = DirichletMeasure::from_labels(&[("1", 1.0), ("2", 1.0), ("3", 1.0)])?;
    let labels = Partition::finite(
        vec!["1".into(), "2".into(), "3".into()],
        vec![vec!["1".into()], vec!["2".into()], vec!["3".into()]],
    )?;
    let posterior = dp_posterior(&alpha, &[Location::label("2")])?;
    let projected = project(&posterior, &labels)?;
    println!("(1,1,1) after observing 2: {:?}", projected.params());
    assert_eq!(projected.params(), &[1.0, 2.0, 1.0]);

    // A real-valued base: two parts uniform mass plus an atom.
    let alpha = DirichletMeasure::new(
        vec![(Location::point(0.7), 2.0)],
        Some((DiffuseBase::Uniform { lo: 0.0, hi: 1.0 }, 3.0)),
    )?;
    let split = Partition::real(vec![0.5])?;
    println!("projected parameters: {:?}", project(&alpha, &split)?.params());

    // Conjugacy square: both routes around it give the same parameters.
    let obs = [Location::point(0.3), Location::point(0.9), Location::point(0.3)];
    let via_dp = project(&dp_posterior(&alpha, &obs)?, &split)?;
    let mut via_counts = project(&alpha, &split)?;
    for o in &obs {
        via_counts = count_update(&via_counts, split.cell_of(o)?)?;
    }
    assert_eq!(via_dp.params(), via_counts.params());
    println!("conjugacy square commutes: {:?}", via_dp.params());

    // Projective chain: coarsening commutes with posterior updates.
    let chain = vec![
        Partition::real(vec![0.5])?,
        Partition::real(vec![0.25, 0.5])?,
        Partition::real(vec![0.125, 0.25, 0.5, 0.75])?,
    ];
    let report = check_projective(&alpha, &chain, &obs)?;
    println!(
        "three-level refinement chain: max deviation {} ({})",
        report.max_dev,
        if report.pass { "exact" } else { "NOT exact" }
    );
    assert!(report.pass);

    // Truncated stick-breaking: residual folding keeps the weights at one,
    // and the bias bound tells how much mass the truncation could misplace.
    let mass = alpha.total_mass();
    let n_sticks = sticks_for_bias(mass, 1e-6);
    println!(
        "{n_sticks} sticks give truncation bias below {:.1e}",
        truncation_bias(mass, n_sticks)
    );
    let draw = stick_breaking_sample(&alpha, n_sticks, 7)?;
    println!(
        "one draw: {} atoms, total weight {}",
        draw.atoms.len(),
        draw.total()
    );
    println!("  heaviest sticks:");
    let mut sorted = draw.atoms.clone();
    sorted.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    for (loc, w) in sorted.iter().take(5) {
        if let Location::Point(x) = loc {
            println!("    atom {x:.4} weight {w:.4}");
        }
    }

    // Monte Carlo moments of projected draws vs the analytic Dirichlet law.
    let report = projection_moment_report(&alpha, &split, n_sticks, 11, 20_000)?;
    for cell in &report.cells {
        println!(
            "  cell {}: mean {:.4} (target {:.4}, z = {:.2}), var {:.5} (target {:.5}, z = {:.2})",
            cell.cell, cell.sample_mean, cell.target_mean, cell.z_mean, cell.sample_var,
            cell.target_var, cell.z_var
        );
    }
    assert!(report.pass);
    Ok(())
}
