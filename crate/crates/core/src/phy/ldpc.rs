//! Regular LDPC code construction and systematic encoding.
//!
//! The parity-check matrix is grown edge by edge in progressive edge-growth
//! fashion: each new edge of a variable node goes to a check node that is as
//! far as possible from it in the current Tanner graph, preferring the
//! lowest current degree. Check degrees are capped so the result is exactly
//! regular. Columns are then permuted so that the last `n - k` columns carry
//! the pivots of a GF(2) elimination, which makes the first `k` codeword
//! bits the information bits.

use rand::RngCore;

use crate::rng::{self, uniform_index};

use super::PhyError;

pub const INFO_BITS: usize = 3072;
pub const CODE_BITS: usize = 6144;
pub const DEFAULT_CODE_SEED: u64 = 0x00C0_DE5E_ED00_0001;

const MAX_ATTEMPTS: u64 = 16;

#[derive(Debug, Clone)]
pub struct LdpcCode {
    n: usize,
    k: usize,
    seed: u64,
    /// Variable indices of every check, after the systematic column permutation.
    checks: Vec<Vec<u32>>,
    /// Check indices of every variable.
    vars: Vec<Vec<u32>>,
    /// Row `i` gives parity bit `k + i` as the GF(2) dot product with the info word.
    generator: Vec<Vec<u64>>,
}

/// The default (6144, 3072) regular (3,6) code.
pub fn build_code(seed: u64) -> Result<LdpcCode, PhyError> {
    LdpcCode::build(CODE_BITS, INFO_BITS, 3, seed)
}

impl LdpcCode {
    pub fn build(n: usize, k: usize, var_degree: usize, seed: u64) -> Result<Self, PhyError> {
        let m = n - k;
        if k == 0 || k >= n || (n * var_degree) % m != 0 || var_degree > m {
            return Err(PhyError::Construction(format!("no regular code with n={n}, k={k}, dv={var_degree}")));
        }
        let check_degree = n * var_degree / m;
        for attempt in 0..MAX_ATTEMPTS {
            let mut rng = rng::seeded(rng::derive(seed, attempt));
            let vars = peg(n, m, var_degree, check_degree, &mut rng);
            if let Some(code) = Self::systematic(n, k, seed, vars) {
                return Ok(code);
            }
        }
        Err(PhyError::Construction(format!("no full-rank matrix after {MAX_ATTEMPTS} attempts")))
    }

    fn systematic(n: usize, k: usize, seed: u64, vars: Vec<Vec<u32>>) -> Option<Self> {
        let m = n - k;
        let words = n.div_ceil(64);
        let mut rows = vec![vec![0u64; words]; m];
        for (v, cs) in vars.iter().enumerate() {
            for &c in cs {
                rows[c as usize][v / 64] ^= 1u64 << (v % 64);
            }
        }
        // Reduced row echelon form, pivots taken from the rightmost columns first.
        let mut pivots = Vec::with_capacity(m);
        let mut r = 0;
        for col in (0..n).rev() {
            if r == m {
                break;
            }
            let (w, b) = (col / 64, 1u64 << (col % 64));
            let Some(p) = (r..m).find(|&i| rows[i][w] & b != 0) else { continue };
            rows.swap(r, p);
            let pivot = rows[r].clone();
            for (i, row) in rows.iter_mut().enumerate() {
                if i != r && row[w] & b != 0 {
                    row.iter_mut().zip(&pivot).for_each(|(a, p)| *a ^= p);
                }
            }
            pivots.push(col);
            r += 1;
        }
        if r < m {
            return None;
        }
        let mut is_pivot = vec![false; n];
        pivots.iter().for_each(|&c| is_pivot[c] = true);
        // New column order: info columns ascending, then the pivot of row 0, 1, ...
        let order: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).chain(pivots.iter().copied()).collect();
        let mut new_index = vec![0u32; n];
        order.iter().enumerate().for_each(|(new, &old)| new_index[old] = new as u32);

        let info_words = k.div_ceil(64);
        let generator = rows
            .iter()
            .map(|row| {
                let mut g = vec![0u64; info_words];
                for (j, &old) in order[..k].iter().enumerate() {
                    if row[old / 64] >> (old % 64) & 1 == 1 {
                        g[j / 64] |= 1u64 << (j % 64);
                    }
                }
                g
            })
            .collect();

        let mut new_vars = vec![Vec::new(); n];
        for (old, cs) in vars.into_iter().enumerate() {
            new_vars[new_index[old] as usize] = cs;
        }
        let mut checks = vec![Vec::new(); m];
        for (v, cs) in new_vars.iter().enumerate() {
            for &c in cs {
                checks[c as usize].push(v as u32);
            }
        }
        Some(Self { n, k, seed, checks, vars: new_vars, generator })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rate(&self) -> f64 {
        self.k as f64 / self.n as f64
    }

    pub fn checks(&self) -> &[Vec<u32>] {
        &self.checks
    }

    pub fn vars(&self) -> &[Vec<u32>] {
        &self.vars
    }

    /// Systematic encoding: the codeword starts with `info` followed by parity.
    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>, PhyError> {
        if info.len() != self.k {
            return Err(PhyError::Length { expected: self.k, got: info.len() });
        }
        let mut packed = vec![0u64; self.k.div_ceil(64)];
        for (j, &b) in info.iter().enumerate() {
            packed[j / 64] |= u64::from(b & 1) << (j % 64);
        }
        let mut out = Vec::with_capacity(self.n);
        out.extend(info.iter().map(|b| b & 1));
        out.extend(self.generator.iter().map(|g| {
            let ones: u32 = g.iter().zip(&packed).map(|(a, b)| (a & b).count_ones()).sum();
            (ones & 1) as u8
        }));
        Ok(out)
    }

    /// Indices of unsatisfied checks for a hard-decision word.
    pub fn syndrome_weight(&self, bits: &[u8]) -> usize {
        self.checks
            .iter()
            .filter(|vs| vs.iter().fold(0u8, |acc, &v| acc ^ (bits[v as usize] & 1)) == 1)
            .count()
    }
}

/// Progressive edge growth with capped check degrees. Returns the check list of every variable.
fn peg<R: RngCore>(n: usize, m: usize, dv: usize, dc: usize, rng: &mut R) -> Vec<Vec<u32>> {
    let mut vars: Vec<Vec<u32>> = vec![Vec::with_capacity(dv); n];
    let mut checks: Vec<Vec<u32>> = vec![Vec::with_capacity(dc); m];
    const UNREACHED: u32 = u32::MAX;
    let mut check_depth = vec![UNREACHED; m];
    let mut var_seen = vec![false; n];
    let mut touched_checks: Vec<u32> = Vec::new();
    let mut touched_vars: Vec<u32> = Vec::new();

    for v in 0..n {
        for _ in 0..dv {
            let open = |c: usize, checks: &Vec<Vec<u32>>| checks[c].len() < dc;
            let open_total = (0..m).filter(|&c| open(c, &checks)).count();
            let target_depth = if vars[v].is_empty() {
                None
            } else {
                // Layered BFS from v; stop once every open check is reached or growth stops.
                let mut frontier: Vec<u32> = vars[v].clone();
                let mut reached_open = 0;
                for &c in &frontier {
                    check_depth[c as usize] = 0;
                    touched_checks.push(c);
                    if open(c as usize, &checks) {
                        reached_open += 1;
                    }
                }
                var_seen[v] = true;
                touched_vars.push(v as u32);
                let mut depth = 0u32;
                while reached_open < open_total {
                    let mut next = Vec::new();
                    for &c in &frontier {
                        for &u in &checks[c as usize] {
                            if var_seen[u as usize] {
                                continue;
                            }
                            var_seen[u as usize] = true;
                            touched_vars.push(u);
                            for &c2 in &vars[u as usize] {
                                if check_depth[c2 as usize] == UNREACHED {
                                    check_depth[c2 as usize] = depth + 1;
                                    touched_checks.push(c2);
                                    next.push(c2);
                                    if open(c2 as usize, &checks) {
                                        reached_open += 1;
                                    }
                                }
                            }
                        }
                    }
                    if next.is_empty() {
                        break;
                    }
                    depth += 1;
                    frontier = next;
                }
                // Farthest open checks: never reached, or reached at the last level.
                Some(if reached_open < open_total { UNREACHED } else { depth })
            };

            let mut candidates: Vec<usize> = (0..m)
                .filter(|&c| open(c, &checks))
                .filter(|&c| target_depth.is_none_or(|d| check_depth[c] == d))
                .filter(|&c| !vars[v].contains(&(c as u32)))
                .collect();
            if let Some(min) = candidates.iter().map(|&c| checks[c].len()).min() {
                candidates.retain(|&c| checks[c].len() == min);
            }

            for c in touched_checks.drain(..) {
                check_depth[c as usize] = UNREACHED;
            }
            for u in touched_vars.drain(..) {
                var_seen[u as usize] = false;
            }

            if candidates.is_empty() {
                // Only open checks left are already adjacent to v: swap an edge.
                let c_open = (0..m).find(|&c| open(c, &checks)).expect("capacity equals edge count");
                rewire(v, c_open, &mut vars, &mut checks, rng);
            } else {
                let c = candidates[uniform_index(rng, candidates.len())];
                vars[v].push(c as u32);
                checks[c].push(v as u32);
            }
        }
    }
    vars
}

/// Moves an existing edge (u, c2) to (u, c_open) and connects v to c2.
fn rewire<R: RngCore>(v: usize, c_open: usize, vars: &mut [Vec<u32>], checks: &mut [Vec<u32>], rng: &mut R) {
    let n = vars.len();
    loop {
        let u = uniform_index(rng, n);
        if u == v || vars[u].is_empty() || vars[u].contains(&(c_open as u32)) {
            continue;
        }
        let c2 = vars[u][uniform_index(rng, vars[u].len())] as usize;
        if vars[v].contains(&(c2 as u32)) {
            continue;
        }
        vars[u].retain(|&c| c as usize != c2);
        checks[c2].retain(|&x| x as usize != u);
        vars[u].push(c_open as u32);
        checks[c_open].push(u as u32);
        vars[v].push(c2 as u32);
        checks[c2].push(v as u32);
        return;
    }
}
