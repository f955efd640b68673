//! Shared test support: fixtures, an IRLS-independent maximum-likelihood
//! oracle, random table generators, and a within-arm bootstrap.

#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

use canonlink::data::{Cell, CellTable};
use canonlink::link::Link;
use rand::Rng;

pub fn mk_table(cells: &[(u64, u64, u64, u64)]) -> CellTable {
    CellTable::new(
        cells
            .iter()
            .map(|&(x, z, e, n)| Cell::new(x, z, e, n).unwrap())
            .collect(),
    )
    .unwrap()
}

/// The worked four-cell example: a null overall effect hiding opposite
/// subgroup effects, perfectly balanced on x.
pub fn table1() -> CellTable {
    mk_table(&[
        (0, 1, 10, 200),
        (0, 0, 20, 200),
        (1, 1, 90, 200),
        (1, 0, 80, 200),
    ])
}

// ---------------------------------------------------------------------
// Independent oracle: binomial log-likelihood written from scratch and
// maximized with Nelder-Mead. Shares nothing with the IRLS path except
// the normal CDF, which is validated against external references on its
// own.
// ---------------------------------------------------------------------

fn oracle_inverse_link(link: Link, eta: f64) -> f64 {
    match link {
        Link::Logit => 1.0 / (1.0 + (-eta).exp()),
        Link::Probit => canonlink::normal::norm_cdf(eta),
        Link::Identity => eta,
        Link::Log => eta.exp(),
        Link::Cloglog => 1.0 - (-eta.exp()).exp(),
    }
}

fn oracle_forward_link(link: Link, mu: f64) -> f64 {
    match link {
        Link::Logit => (mu / (1.0 - mu)).ln(),
        Link::Probit => canonlink::normal::norm_quantile(mu),
        Link::Identity => mu,
        Link::Log => mu.ln(),
        Link::Cloglog => (-(1.0 - mu).ln()).ln(),
    }
}

/// Negative binomial log-likelihood over the table's cells; +inf outside
/// the open probability region.
pub fn oracle_neg_log_likelihood(
    table: &CellTable,
    link: Link,
    adjusted: bool,
    beta: &[f64],
) -> f64 {
    let mut total = 0.0;
    for cell in table.cells() {
        let mut eta = beta[0] + beta[1] * cell.z() as f64;
        if adjusted {
            eta += beta[2] * cell.x() as f64;
        }
        let mu = oracle_inverse_link(link, eta);
        if !(mu > 0.0 && mu < 1.0) {
            return f64::INFINITY;
        }
        total += cell.events() as f64 * mu.ln()
            + (cell.trials() - cell.events()) as f64 * (1.0 - mu).ln();
    }
    -total
}

/// Nelder-Mead minimization with fresh-simplex restarts around the
/// incumbent best point.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, start: &[f64]) -> Vec<f64> {
    let n = start.len();
    let mut best = start.to_vec();
    let mut best_f = f(&best);

    for (restart, scale) in [0.25, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001]
        .iter()
        .enumerate()
    {
        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        simplex.push(best.clone());
        for i in 0..n {
            let mut v = best.clone();
            // alternate the perturbation sign between restarts so a
            // boundary on one side does not trap the simplex
            v[i] += if restart % 2 == 0 { *scale } else { -scale };
            simplex.push(v);
        }
        let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

        for _ in 0..4000 {
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            let (lo, hi, second_hi) = (order[0], order[n], order[n - 1]);
            if (values[hi] - values[lo]).abs() <= 1e-13 * (1.0 + values[lo].abs()) {
                break;
            }

            let centroid: Vec<f64> = (0..n)
                .map(|j| order[..n].iter().map(|&i| simplex[i][j]).sum::<f64>() / n as f64)
                .collect();
            let reflect: Vec<f64> = (0..n)
                .map(|j| centroid[j] + (centroid[j] - simplex[hi][j]))
                .collect();
            let f_reflect = f(&reflect);

            if f_reflect < values[lo] {
                let expand: Vec<f64> = (0..n)
                    .map(|j| centroid[j] + 2.0 * (centroid[j] - simplex[hi][j]))
                    .collect();
                let f_expand = f(&expand);
                if f_expand < f_reflect {
                    simplex[hi] = expand;
                    values[hi] = f_expand;
                } else {
                    simplex[hi] = reflect;
                    values[hi] = f_reflect;
                }
            } else if f_reflect < values[second_hi] {
                simplex[hi] = reflect;
                values[hi] = f_reflect;
            } else {
                let contract: Vec<f64> = (0..n)
                    .map(|j| centroid[j] + 0.5 * (simplex[hi][j] - centroid[j]))
                    .collect();
                let f_contract = f(&contract);
                if f_contract < values[hi] {
                    simplex[hi] = contract;
                    values[hi] = f_contract;
                } else {
                    for i in 0..=n {
                        if i != lo {
                            for j in 0..n {
                                simplex[i][j] =
                                    simplex[lo][j] + 0.5 * (simplex[i][j] - simplex[lo][j]);
                            }
                            values[i] = f(&simplex[i]);
                        }
                    }
                }
            }
        }

        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        if values[order[0]] < best_f {
            best_f = values[order[0]];
            best = simplex[order[0]].clone();
        }
    }
    best
}

/// Maximum-likelihood coefficients by derivative-free search, starting
/// from a flat model at the pooled event rate.
pub fn oracle_ml(table: &CellTable, link: Link, adjusted: bool) -> Vec<f64> {
    let pooled = (table.total_events() as f64 + 0.5) / (table.total_trials() as f64 + 1.0);
    let p = if adjusted { 3 } else { 2 };
    let mut start = vec![0.0; p];
    start[0] = oracle_forward_link(link, pooled);
    nelder_mead(
        |beta| oracle_neg_log_likelihood(table, link, adjusted, beta),
        &start,
    )
}

// ---------------------------------------------------------------------
// Random table generators (deterministic given the caller's RNG).
// ---------------------------------------------------------------------

/// A four-cell table with moderate interior risks, so every link's ML is
/// interior and every fit converges.
pub fn random_moderate_table<R: Rng>(rng: &mut R) -> CellTable {
    let mut cells = Vec::with_capacity(4);
    for (x, z) in [(0, 1), (0, 0), (1, 1), (1, 0)] {
        let trials = rng.gen_range(30..=300u64);
        let risk: f64 = rng.gen_range(0.15..0.6);
        let events = ((trials as f64 * risk).round() as u64).clamp(1, trials - 1);
        cells.push((x, z, events, trials));
    }
    mk_table(&cells)
}

/// A perfectly balanced table whose arms share the same event total, so
/// the unadjusted treatment coefficient is null under every link.
pub fn random_balanced_null_table<R: Rng>(rng: &mut R) -> CellTable {
    loop {
        let n0 = rng.gen_range(40..=300u64);
        let n1 = rng.gen_range(40..=300u64);
        let e01 = rng.gen_range(1..n0); // events at x=0 in arm 1
        let e11 = rng.gen_range(1..n1);
        let total = e01 + e11;
        let lo = 1.max(total.saturating_sub(n1 - 1));
        let hi = (n0 - 1).min(total - 1);
        if lo > hi {
            continue;
        }
        let e00 = rng.gen_range(lo..=hi);
        let e10 = total - e00;
        return mk_table(&[
            (0, 1, e01, n0),
            (0, 0, e00, n0),
            (1, 1, e11, n1),
            (1, 0, e10, n1),
        ]);
    }
}

/// A balanced table whose adjusted treatment coefficient is exactly null:
/// per-stratum pooled rates are preserved while `transfer` events move
/// between strata within each arm in opposite directions.
pub fn random_adjusted_null_table<R: Rng>(rng: &mut R) -> CellTable {
    loop {
        let n0 = rng.gen_range(40..=300u64);
        let n1 = rng.gen_range(40..=300u64);
        let m0 = rng.gen_range(2..n0 - 1); // per-arm stratum-0 events
        let m1 = rng.gen_range(2..n1 - 1);
        let t_max = (m0 - 1).min(m1 - 1).min(n0 - 1 - m0).min(n1 - 1 - m1);
        if t_max < 1 {
            continue;
        }
        let t = rng.gen_range(1..=t_max);
        return mk_table(&[
            (0, 1, m0 + t, n0),
            (0, 0, m0 - t, n0),
            (1, 1, m1 - t, n1),
            (1, 0, m1 + t, n1),
        ]);
    }
}

// ---------------------------------------------------------------------
// Within-arm nonparametric bootstrap of the standardization estimators.
// ---------------------------------------------------------------------

/// Resamples individuals within each arm of `table` (multinomial over the
/// arm's (x, y) categories) and re-aggregates. `None` when a resampled
/// cell is empty or degenerate.
pub fn resample_within_arms<R: Rng>(table: &CellTable, rng: &mut R) -> Option<CellTable> {
    let mut cells: Vec<(u64, u64, u64, u64)> = Vec::with_capacity(table.cells().len());
    for arm in [1u8, 0u8] {
        // categories: (cell index, y) with individual counts
        let mut weights: Vec<(usize, u64, f64)> = Vec::new();
        let mut arm_n = 0u64;
        for (i, cell) in table.cells().iter().enumerate() {
            if cell.z() != arm {
                continue;
            }
            arm_n += cell.trials();
            weights.push((i, 1, cell.events() as f64));
            weights.push((i, 0, (cell.trials() - cell.events()) as f64));
        }
        let total: f64 = weights.iter().map(|w| w.2).sum();
        let mut counts = vec![0u64; weights.len()];
        for _ in 0..arm_n {
            let mut u: f64 = rng.gen_range(0.0..total);
            for (k, w) in weights.iter().enumerate() {
                u -= w.2;
                if u < 0.0 {
                    counts[k] += 1;
                    break;
                }
            }
        }
        let mut by_cell: std::collections::BTreeMap<usize, (u64, u64)> = Default::default();
        for ((i, y, _), c) in weights.iter().zip(&counts) {
            let entry = by_cell.entry(*i).or_default();
            if *y == 1 {
                entry.0 += c;
            } else {
                entry.1 += c;
            }
        }
        for (i, (events, non_events)) in by_cell {
            let trials = events + non_events;
            if trials == 0 || events == 0 || events == trials {
                return None;
            }
            let cell = table.cells()[i];
            cells.push((cell.x() as u64, cell.z() as u64, events, trials));
        }
    }
    Some(mk_table(&cells))
}

// ---------------------------------------------------------------------
// CLI helpers.
// ---------------------------------------------------------------------

pub fn cli_bin() -> &'static str {
    env!("CARGO_BIN_EXE_canonlink")
}

pub struct CliOutput {
    pub status: Option<i32>,
    pub stdout: String,
    pub stderr: String,
}

pub fn run_cli(args: &[&str]) -> CliOutput {
    run_cli_with_env(args, &[])
}

pub fn run_cli_with_env(args: &[&str], env: &[(&str, &str)]) -> CliOutput {
    let mut cmd = std::process::Command::new(cli_bin());
    cmd.args(args);
    cmd.env_remove("CANONLINK_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("binary runs");
    CliOutput {
        status: out.status.code(),
        stdout: String::from_utf8(out.stdout).expect("utf-8 stdout"),
        stderr: String::from_utf8(out.stderr).expect("utf-8 stderr"),
    }
}

pub const TABLE1_CSV: &str = "x,z,events,trials\n0,1,10,200\n0,0,20,200\n1,1,90,200\n1,0,80,200\n";

pub fn write_table1(dir: &std::path::Path) -> std::path::PathBuf {
    let path = dir.join("table1.csv");
    std::fs::write(&path, TABLE1_CSV).unwrap();
    path
}
