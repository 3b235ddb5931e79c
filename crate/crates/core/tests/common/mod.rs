//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;

/// Binomial coefficient times powers, straight from the definition.
pub fn binomial_direct(n: usize, k: usize, p: f64) -> f64 {
    let mut c = 1.0;
    for j in 0..k {
        c = c * (n - j) as f64 / (j + 1) as f64;
    }
    c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

/// Distribution of the minimum of independent binomials by walking the whole
/// joint outcome space.
pub fn exhaustive_min(n_mem: usize, ps: &[f64]) -> Vec<f64> {
    let pmfs: Vec<Vec<f64>> = ps
        .iter()
        .map(|&p| (0..=n_mem).map(|k| binomial_direct(n_mem, k, p)).collect())
        .collect();
    let mut out = vec![0.0; n_mem + 1];
    let mut idx = vec![0usize; ps.len()];
    loop {
        let w: f64 = idx.iter().zip(&pmfs).map(|(&k, pmf)| pmf[k]).product();
        out[*idx.iter().min().unwrap()] += w;
        let mut j = 0;
        loop {
            if j == idx.len() {
                return out;
            }
            idx[j] += 1;
            if idx[j] <= n_mem {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// Herald probabilities split into (coherent, dephased, garbage), found by
/// enumerating every emission, bin, detection and dark-count pattern.
///
/// `eta_t`/`eta_r` are the per-photon detection probabilities of the
/// travelled and local arms; `d` is the dark-count probability per detector
/// per bin, with two detectors.
pub fn herald_tree(p1_t: f64, p2_t: f64, eta_t: f64, p1_r: f64, p2_r: f64, eta_r: f64, d: f64) -> (f64, f64, f64) {
    // Per arm: list of (probability, photons detected in [early, late], kind)
    // with kind 0 = nothing emitted, 1 = single, 2 = double.
    fn arm(p1: f64, p2: f64, eta: f64) -> Vec<(f64, [u32; 2], u8)> {
        let mut v = vec![(1.0 - p1 - p2, [0, 0], 0)];
        for bin in 0..2 {
            // single photon
            let mut det = [0, 0];
            det[bin] = 1;
            v.push((0.5 * p1 * eta, det, 1));
            v.push((0.5 * p1 * (1.0 - eta), [0, 0], 1));
            // two photons in the same bin, each detected independently
            for k in 0..=2u32 {
                let ways = if k == 1 { 2.0 } else { 1.0 };
                let pk = ways * eta.powi(k as i32) * (1.0 - eta).powi(2 - k as i32);
                let mut det = [0, 0];
                det[bin] = k;
                v.push((0.5 * p2 * pk, det, 2));
            }
        }
        v
    }
    let travelled = arm(p1_t, p2_t, eta_t);
    let local = arm(p1_r, p2_r, eta_r);
    let (mut coh, mut deph, mut garb) = (0.0, 0.0, 0.0);
    for &(pa, da, ka) in &travelled {
        for &(pb, db, kb) in &local {
            // Four dark-count windows: (detector, bin).
            for mask in 0..16u32 {
                let mut pd = 1.0;
                let mut dark = [0u32, 0];
                for w in 0..4 {
                    if mask & (1 << w) != 0 {
                        pd *= d;
                        dark[w % 2] += 1;
                    } else {
                        pd *= 1.0 - d;
                    }
                }
                let events = [da[0] + db[0] + dark[0], da[1] + db[1] + dark[1]];
                if events != [1, 1] {
                    continue;
                }
                let p = pa * pb * pd;
                let photons_t = da[0] + da[1];
                let photons_r = db[0] + db[1];
                if dark[0] + dark[1] > 0 {
                    garb += p;
                } else if photons_t == 1 && photons_r == 1 {
                    if ka == 1 && kb == 1 {
                        coh += p;
                    } else {
                        deph += p;
                    }
                }
            }
        }
    }
    (coh, deph, garb)
}

pub const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn ket(bits: &[(usize, f64)], dim: usize) -> DMatrix<f64> {
    let mut v = DMatrix::zeros(dim, 1);
    for &(i, a) in bits {
        v[(i, 0)] = a;
    }
    v
}

/// Bell states on two qubits in the order psi+, psi-, phi+, phi-.
pub fn bell_states() -> [DMatrix<f64>; 4] {
    let s = SQRT_HALF;
    [
        ket(&[(1, s), (2, s)], 4),
        ket(&[(1, s), (2, -s)], 4),
        ket(&[(0, s), (3, s)], 4),
        ket(&[(0, s), (3, -s)], 4),
    ]
}

pub fn target() -> DMatrix<f64> {
    let psi = bell_states()[0].clone();
    &psi * psi.transpose()
}

pub fn dephased() -> DMatrix<f64> {
    let mut m = DMatrix::zeros(4, 4);
    m[(1, 1)] = 0.5;
    m[(2, 2)] = 0.5;
    m
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

fn identity(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

/// Operator acting with `op` (2^k x 2^k) on qubits `first..first+k` of an
/// `n`-qubit register, qubit 0 most significant.
pub fn embed(op: &DMatrix<f64>, first: usize, k: usize, n: usize) -> DMatrix<f64> {
    let left = identity(1 << first);
    let right = identity(1 << (n - first - k));
    kron(&kron(&left, op), &right)
}

/// Trace out every qubit not in `keep` (sorted ascending).
pub fn reduce(rho: &DMatrix<f64>, n: usize, keep: &[usize]) -> DMatrix<f64> {
    let m = keep.len();
    let dim = 1 << m;
    let traced: Vec<usize> = (0..n).filter(|q| !keep.contains(q)).collect();
    let bit = |idx: usize, q: usize| (idx >> (n - 1 - q)) & 1;
    let compose = |kept: usize, rest: usize| {
        let mut idx = 0;
        for (j, &q) in keep.iter().enumerate() {
            idx |= ((kept >> (m - 1 - j)) & 1) << (n - 1 - q);
        }
        for (j, &q) in traced.iter().enumerate() {
            idx |= ((rest >> (traced.len() - 1 - j)) & 1) << (n - 1 - q);
        }
        idx
    };
    let _ = bit;
    let mut out = DMatrix::zeros(dim, dim);
    for a in 0..dim {
        for b in 0..dim {
            let mut s = 0.0;
            for r in 0..(1 << traced.len()) {
                s += rho[(compose(a, r), compose(b, r))];
            }
            out[(a, b)] = s;
        }
    }
    out
}

pub fn paulis() -> [DMatrix<f64>; 4] {
    let i = identity(2);
    let x = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let z = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    let xz = &x * &z;
    [i, x, z, xz]
}

/// Components of a link state: (weight, density matrix or None for garbage).
pub fn components(alpha: f64, beta: f64, gamma: f64) -> Vec<(f64, Option<DMatrix<f64>>)> {
    vec![(alpha, Some(target())), (beta, Some(dephased())), (gamma, None)]
}

/// Entanglement swapping through a chain of two-qubit links with ideal
/// Bell measurements on every inner pair and a Pauli frame correction on the
/// last qubit. Returns the unnormalized end-to-end state (trace = probability
/// of no garbage) on the outer qubits.
pub fn swap_chain_pure(links: &[DMatrix<f64>], corrections: &[DMatrix<f64>]) -> DMatrix<f64> {
    let k = links.len();
    let n = 2 * k;
    let mut rho = links[0].clone();
    for l in &links[1..] {
        rho = kron(&rho, l);
    }
    let bells = bell_states();
    let n_swaps = k - 1;
    let mut out = DMatrix::zeros(4, 4);
    for (outcome, correction) in corrections.iter().enumerate() {
        let mut proj = identity(1 << n);
        let mut o = outcome;
        for s in 0..n_swaps {
            let b = &bells[o % 4];
            o /= 4;
            proj = &proj * embed(&(b * b.transpose()), 2 * s + 1, 2, n);
        }
        let post = &proj * &rho * &proj;
        let end = reduce(&post, n, &[0, n - 1]);
        let c = embed(correction, 1, 1, 2);
        out += &c * end * c.transpose();
    }
    out
}

/// Pauli correction on the last qubit for every joint Bell outcome, chosen
/// so perfect links give the target state.
pub fn find_corrections(k: usize) -> Vec<DMatrix<f64>> {
    let n_swaps = k - 1;
    let bells = bell_states();
    let t = target();
    (0..4usize.pow(n_swaps as u32))
        .map(|outcome| {
            let links: Vec<_> = (0..k).map(|_| t.clone()).collect();
            let n = 2 * k;
            let mut rho = links[0].clone();
            for l in &links[1..] {
                rho = kron(&rho, l);
            }
            let mut proj = identity(1 << n);
            let mut o = outcome;
            for s in 0..n_swaps {
                let b = &bells[o % 4];
                o /= 4;
                proj = &proj * embed(&(b * b.transpose()), 2 * s + 1, 2, n);
            }
            let end = reduce(&(&proj * &rho * &proj), n, &[0, n - 1]);
            let p = end.trace();
            paulis()
                .into_iter()
                .find(|pauli| {
                    let c = embed(pauli, 1, 1, 2);
                    let fixed = &c * &end * c.transpose() / p;
                    ((&t * fixed).trace() - 1.0).abs() < 1e-12
                })
                .expect("some Pauli restores the target")
        })
        .collect()
}

/// Brute-force end-to-end (A, B, C) and fidelity for a chain of links given
/// as (alpha, beta, gamma), with each swap error free with `p_swap` and
/// garbage otherwise.
pub fn density_matrix_chain(links: &[(f64, f64, f64)], p_swap: f64) -> (f64, f64, f64, f64, f64) {
    let k = links.len();
    let corrections = find_corrections(k);
    let t = target();
    let psi_minus = {
        let b = bell_states()[1].clone();
        &b * b.transpose()
    };
    let comps: Vec<_> = links.iter().map(|&(a, b, g)| components(a, b, g)).collect();
    let (mut a_tot, mut b_tot, mut c_tot) = (0.0, 0.0, 0.0);
    let mut residual: f64 = 0.0;
    let mut idx = vec![0usize; k];
    loop {
        let w: f64 = idx.iter().zip(&comps).map(|(&i, c)| c[i].0).product();
        let mats: Option<Vec<DMatrix<f64>>> = idx.iter().zip(&comps).map(|(&i, c)| c[i].1.clone()).collect();
        match mats {
            None => c_tot += w,
            Some(ms) if w > 0.0 => {
                let end = swap_chain_pure(&ms, &corrections);
                // Decompose as a * target + b * dephased.
                let f_plus = (&t * &end).trace();
                let f_minus = (&psi_minus * &end).trace();
                let a = f_plus - f_minus;
                let b = 2.0 * f_minus;
                let rebuilt = &t * a + dephased() * b;
                residual = residual.max((&end - rebuilt).abs().max());
                a_tot += w * a;
                b_tot += w * b;
                c_tot += w * (1.0 - a - b);
            }
            Some(_) => {}
        }
        let mut j = 0;
        loop {
            if j == k {
                let swaps = (k - 1) as i32;
                let fidelity = p_swap.powi(swaps) * (a_tot + 0.5 * b_tot);
                return (a_tot, b_tot, c_tot, fidelity, residual);
            }
            idx[j] += 1;
            if idx[j] < 3 {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}
