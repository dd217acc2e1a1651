use hadoa::combiner::CombinerSpec;
use hadoa::recon::{identifiability_report, slot_family_probe, ReconstructionMode, ReconstructionPlan};

fn main() {
    for spec in [
        CombinerSpec::FullyConnected,
        CombinerSpec::PartiallyConnected { subarray_size: 4 },
        CombinerSpec::SwitchBased { active_per_chain: 1 },
        CombinerSpec::DynamicSubarray { num_subarrays: 4, closure_ratio: 0.5 },
    ] {
        println!("== {spec:?}");
        for t in [16usize, 24, 28, 34, 48] {
            match slot_family_probe(&spec, 8, 0.5, 2, t, 99) {
                Ok(combiners) => {
                    let plan = ReconstructionPlan::new(combiners, 1).unwrap();
                    let rep = identifiability_report(&plan, ReconstructionMode::Entrywise);
                    println!(
                        "  T={t}: rank {} / {} cond {:.2e}",
                        rep.numerical_rank, rep.required_rank, rep.condition_estimate
                    );
                }
                Err(e) => println!("  T={t}: build error {e}"),
            }
        }
    }
    // Toeplitz fixture hunt: which 4-slot pair plans (M=8, L=2) reach rank 15?
    println!("== toeplitz 4-slot plans, M=8 L=2");
    let pair_sets: Vec<Vec<(usize, usize)>> = vec![
        vec![(0, 1), (2, 3), (4, 5), (6, 7)],
        vec![(0, 1), (2, 4), (3, 6), (5, 7)],
        vec![(0, 1), (1, 3), (2, 6), (4, 7)],
        vec![(0, 1), (0, 2), (0, 4), (3, 7)],
        vec![(0, 1), (2, 4), (5, 1), (6, 3)],
        vec![(0, 1), (1, 2), (2, 3), (3, 4)],
    ];
    let grid = hadoa::combiner::default_beam_grid(8);
    for (idx, pairs) in pair_sets.iter().enumerate() {
        let combiners: Vec<_> = pairs
            .iter()
            .map(|&(a, b)| {
                hadoa::combiner::Combiner::fc_beams(8, 0.5, &[grid[a], grid[b]]).unwrap()
            })
            .collect();
        let plan = ReconstructionPlan::new(combiners, 1).unwrap();
        let rep = identifiability_report(&plan, ReconstructionMode::Toeplitz);
        println!(
            "  plan {idx}: rank {} / {} cond {:.2e}",
            rep.numerical_rank, rep.required_rank, rep.condition_estimate
        );
    }
}
