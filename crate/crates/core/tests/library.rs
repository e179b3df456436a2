use nalgebra::DMatrix;
use prodnet::evalx::benchmark_comparison;
use prodnet::netstats::{generate_sbm, BlockScheme};
use prodnet::panel::{growth_rates, read_growth_csv, read_sales, rescale_loo, write_growth_csv};
use prodnet::pipeline::{reconstruct_network, ReconstructionPlan};
use prodnet::sgl::SolverConfig;
use prodnet::spectral::{clean_market_mode, corr_matrix, CleanOptions};
use prodnet::synth::{apply_missingness, gen_gmrf_panel, MissingPattern};
use prodnet::Partition;

#[test]
fn sales_to_cleaned_panel_survives_a_csv_round_trip() {
    let mut text = String::from("firm_id,quarter,sales\n");
    for (f, name) in ["acme", "bolt", "cog", "dyn"].iter().enumerate() {
        for q in 0..24 {
            // one gap per firm
            if q == 5 + f {
                continue;
            }
            let s = 100.0 * (1.0 + 0.03 * q as f64) * (1.0 + 0.1 * ((q * (f + 2)) as f64).sin());
            text.push_str(&format!("{name},{q},{s}\n"));
        }
    }
    let sales = read_sales(text.as_bytes(), 4).unwrap();
    assert_eq!(sales.n_firms(), 4);
    let g = rescale_loo(&growth_rates(&sales, 4).unwrap()).unwrap();
    assert_eq!(g.n_times(), 20);
    // a gap at q removes the growth rates starting at q - 4 and at q
    assert!(!g.is_observed(0, 1) && !g.is_observed(0, 5) && g.is_observed(0, 0));

    let cleaned = clean_market_mode(&g, &CleanOptions::default()).unwrap().cleaned;
    let mut buf = Vec::new();
    write_growth_csv(&cleaned, &mut buf).unwrap();
    let back = read_growth_csv(buf.as_slice(), true).unwrap();
    assert_eq!(back.firm_ids, cleaned.firm_ids);
    assert_eq!(back.mask(), cleaned.mask());
    for i in 0..4 {
        for t in 0..20 {
            assert_eq!(back.get(i, t), cleaned.get(i, t));
        }
    }
}

#[test]
fn lagged_correlation_is_the_transpose_of_the_opposite_lag() {
    let net = generate_sbm(
        &BlockScheme::new(Partition::from_labels(vec![0; 12]), DMatrix::from_element(1, 1, 0.4)).unwrap(),
        3,
    )
    .unwrap();
    let panel = apply_missingness(&gen_gmrf_panel(&net, 200, 0.5, 0.0, 4).unwrap().panel, MissingPattern::Random { p_miss: 0.2 }, 5).unwrap();
    let g = rescale_loo(&panel).unwrap();
    let plus = corr_matrix(&g, 2, 8).unwrap();
    let minus = corr_matrix(&g, -2, 8).unwrap();
    assert!((&plus.values - minus.values.transpose()).amax() < 1e-12);
    assert_eq!(plus.overlap, minus.overlap.transpose());
}

#[test]
fn planted_reconstruction_is_deterministic_and_informative() {
    let labels: Vec<usize> = (0..60).map(|i| i / 30).collect();
    let partition = Partition::from_labels(labels);
    let densities = DMatrix::from_row_slice(2, 2, &[0.2, 0.03, 0.03, 0.2]);
    let truth = generate_sbm(&BlockScheme::new(partition.clone(), densities.clone()).unwrap(), 21).unwrap();
    let panel = gen_gmrf_panel(&truth, 1500, 0.5, 0.5, 22).unwrap().panel;
    let cleaned = clean_market_mode(&rescale_loo(&panel).unwrap(), &CleanOptions::default()).unwrap().cleaned;
    let c = corr_matrix(&cleaned, 0, 8).unwrap();
    let plan = ReconstructionPlan {
        partition: partition.clone(),
        target_density_diag: vec![0.2, 0.2],
        target_density_offdiag: densities,
        spectra_samples: 50,
        solver: SolverConfig {
            beta: 4.0,
            max_iter: 300,
            ..SolverConfig::default()
        },
        seed: 23,
    };
    let (a, report) = reconstruct_network(&c, &plan).unwrap();
    let (b, _) = reconstruct_network(&c, &plan).unwrap();
    assert_eq!(a, b);
    assert_eq!(report.blocks.len(), 3);
    assert_eq!(report.total_edges, a.edge_count());
    for block in &report.blocks {
        assert!((block.density - block.density_goal).abs() <= 0.1 * block.density_goal + 1e-12, "{block:?}");
    }

    let cmp = benchmark_comparison(&truth, &a, &partition, 20, 24).unwrap();
    let f1 = cmp.predicted.f1.unwrap();
    for bench in &cmp.benchmarks {
        assert!(bench.exceeded.f1, "{} F1 {f1} vs {:?}", bench.model, bench.f1);
    }
}
