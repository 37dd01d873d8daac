//! `dpp-demo`: exact k-DPP draws against the enumerated subset law.

use anyhow::{bail, Result};
use clap::Args;
use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};

use nodecon::dpp::{build_kernel, dpp_brute_probabilities, Bandwidth, DppSampler, MAX_ENUMERATION};
use nodecon::rng::{stream, Phase};

#[derive(Args)]
pub struct DemoArgs {
    /// Pool size M (at most 12).
    #[arg(long, default_value_t = 6)]
    pub pool_size: usize,
    /// Subset size.
    #[arg(long, default_value_t = 3)]
    pub m: usize,
    /// Number of sampler draws; 0 prints the analytic law only.
    #[arg(long, default_value_t = 200_000)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dimension of the random pool embeddings.
    #[arg(long, default_value_t = 4)]
    pub dim: usize,
    /// Fixed kernel bandwidth instead of the median heuristic. Small values
    /// give a near-identity kernel.
    #[arg(long)]
    pub bandwidth: Option<f64>,
}

fn subset_name(mask: usize, m: usize) -> String {
    let items: Vec<String> = (0..m).filter(|i| mask & (1 << i) != 0).map(|i| i.to_string()).collect();
    format!("{{{}}}", items.join(","))
}

pub fn run(args: &DemoArgs) -> Result<()> {
    let n = args.pool_size;
    if n > MAX_ENUMERATION {
        bail!("pool size {n} too large to enumerate (max {MAX_ENUMERATION})");
    }
    if args.m > n {
        bail!("cannot draw {} items from a pool of {n}", args.m);
    }
    let mut rng = stream(args.seed, Phase::Demo, 0, 0);
    let pool = Array2::from_shape_fn((n, args.dim.max(1)), |_| StandardNormal.sample(&mut rng));
    let bw = args.bandwidth.map_or(Bandwidth::Median, Bandwidth::Fixed);
    let kernel = build_kernel(pool.view(), (0..n).collect(), bw)?;

    println!("# kernel");
    for row in kernel.matrix().outer_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        println!("{}", cells.join("\t"));
    }
    println!("# eigenvalues");
    let eig: Vec<String> = kernel.eigenvalues().iter().map(|v| format!("{v:.6e}")).collect();
    println!("{}", eig.join("\t"));

    let law = dpp_brute_probabilities(&kernel)?.conditioned_on_size(args.m);
    if args.draws == 0 {
        println!("# subset\tanalytic");
        for (mask, p) in &law {
            println!("{}\t{p:.6}", subset_name(*mask, n));
        }
        return Ok(());
    }

    let sampler = DppSampler::new(&kernel);
    let mut counts = vec![0usize; 1 << n];
    let mut draw_rng = stream(args.seed, Phase::Demo, 1, 0);
    for _ in 0..args.draws {
        let s = sampler.sample_k(args.m, &mut draw_rng)?;
        counts[s.iter().fold(0, |acc, &i| acc | (1 << i))] += 1;
    }
    println!("# subset\tanalytic\tempirical");
    let mut tv = 0.0;
    for (mask, p) in &law {
        let q = counts[*mask] as f64 / args.draws as f64;
        tv += (p - q).abs();
        println!("{}\t{p:.6}\t{q:.6}", subset_name(*mask, n));
    }
    println!("tv={:.6} draws={}", tv / 2.0, args.draws);
    Ok(())
}
