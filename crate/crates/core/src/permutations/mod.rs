//! Type-1 hash permutations (MiMC, GMiMC, Poseidon, Poseidon2, Neptune) and
//! the sponge that turns them into field hashes.
//!
//! The published designs fix round counts but this crate
//! pins its own constants and linear layers (see `params/`). Outputs are
//! therefore not byte-compatible with circomlib or other reference code.
//! Neptune in particular is a Poseidon2-shaped stand-in: external rounds use
//! a dense MDS layer and internal rounds use `J + diag`.

mod params;
mod sponge;

pub use params::{
    determinant, generate_params, generate_params_with, HashKind, Matrix, ParamError, ParamFile,
    PermutationSpec,
};
pub use sponge::{hash2, sponge_hash, Hasher, SpongeConfig};

use thiserror::Error;

use crate::field::FieldElement;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HashError {
    #[error("state has {found} elements, permutation width is {expected}")]
    Arity { expected: usize, found: usize },
    #[error("sponge input must not be empty")]
    EmptyInput,
    #[error("sponge rate {rate} does not fit width {width}")]
    BadRate { rate: usize, width: usize },
}

#[inline]
fn sbox(x: FieldElement, d: u64) -> FieldElement {
    x.pow(d).expect("validated exponent is nonzero")
}

fn apply_matrix(m: &Matrix, state: &mut [FieldElement]) {
    let out: Vec<FieldElement> = m
        .iter()
        .map(|row| row.iter().zip(state.iter()).map(|(a, b)| *a * *b).sum())
        .collect();
    state.copy_from_slice(&out);
}

/// Applies the permutation described by `spec` to `state`.
pub fn permute(spec: &PermutationSpec, state: &[FieldElement]) -> Result<Vec<FieldElement>, HashError> {
    let mut s = state.to_vec();
    permute_in_place(spec, &mut s)?;
    Ok(s)
}

pub fn permute_in_place(spec: &PermutationSpec, state: &mut [FieldElement]) -> Result<(), HashError> {
    if state.len() != spec.width() {
        return Err(HashError::Arity { expected: spec.width(), found: state.len() });
    }
    match spec.kind() {
        HashKind::Mimc => mimc_feistel(spec, state),
        HashKind::Gmimc => gmimc_erf(spec, state),
        HashKind::Poseidon => poseidon(spec, state),
        HashKind::Poseidon2 | HashKind::Neptune => poseidon2(spec, state),
    }
    Ok(())
}

/// Width-2 Feistel: `t = xL + c_i`, `(xL, xR) <- (xR + t^d, xL)`, with the
/// swap suppressed in the last round.
fn mimc_feistel(spec: &PermutationSpec, state: &mut [FieldElement]) {
    let d = spec.exponent();
    let rounds = spec.round_constants();
    let (mut xl, mut xr) = (state[0], state[1]);
    for (i, c) in rounds.iter().enumerate() {
        let f = sbox(xl + c[0], d);
        if i + 1 < rounds.len() {
            let next_l = xr + f;
            xr = xl;
            xl = next_l;
        } else {
            xr += f;
        }
    }
    state[0] = xl;
    state[1] = xr;
}

/// Expanding-round-function Feistel: `(x_0 + c_i)^d` is added to every other
/// branch, then the state rotates left by one.
fn gmimc_erf(spec: &PermutationSpec, state: &mut [FieldElement]) {
    let d = spec.exponent();
    for c in spec.round_constants() {
        let f = sbox(state[0] + c[0], d);
        for x in state.iter_mut().skip(1) {
            *x += f;
        }
        state.rotate_left(1);
    }
}

fn poseidon(spec: &PermutationSpec, state: &mut [FieldElement]) {
    let d = spec.exponent();
    let mds = spec.matrix("mds").expect("validated");
    for (round, c) in spec.round_constants().iter().enumerate() {
        for (x, k) in state.iter_mut().zip(c) {
            *x += *k;
        }
        if spec.is_full_round(round) {
            for x in state.iter_mut() {
                *x = sbox(*x, d);
            }
        } else {
            state[0] = sbox(state[0], d);
        }
        apply_matrix(mds, state);
    }
}

/// Poseidon2 skeleton, also used for the Neptune stand-in: an initial
/// external layer, then full rounds with the external layer around a block
/// of partial rounds with the internal layer.
fn poseidon2(spec: &PermutationSpec, state: &mut [FieldElement]) {
    let d = spec.exponent();
    let external = spec.matrix("external").expect("validated");
    let internal = spec.matrix("internal").expect("validated");
    apply_matrix(external, state);
    for (round, c) in spec.round_constants().iter().enumerate() {
        if spec.is_full_round(round) {
            for (x, k) in state.iter_mut().zip(c) {
                *x = sbox(*x + *k, d);
            }
            apply_matrix(external, state);
        } else {
            state[0] = sbox(state[0] + c[0], d);
            apply_matrix(internal, state);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn wrong_width_is_an_arity_error() {
        let spec = PermutationSpec::builtin(HashKind::Poseidon2);
        let err = permute(&spec, &[FieldElement::ZERO; 2]).unwrap_err();
        assert_eq!(err, HashError::Arity { expected: 3, found: 2 });
    }

    #[test]
    fn permutation_is_deterministic_and_moves_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for kind in HashKind::ALL {
            let spec = PermutationSpec::builtin(kind);
            let input: Vec<_> = (0..spec.width()).map(|_| FieldElement::random(&mut rng)).collect();
            assert_eq!(permute(&spec, &input).unwrap(), permute(&spec, &input).unwrap());
            let zero = vec![FieldElement::ZERO; spec.width()];
            assert_ne!(permute(&spec, &zero).unwrap(), zero, "{kind}");
        }
    }

    #[test]
    fn mimc_last_round_does_not_swap() {
        // With a single round the Feistel reduces to xR + (xL + c)^5.
        let c = FieldElement::from_u64(7);
        let spec = PermutationSpec::new(HashKind::Mimc, 2, 5, 1, 0, vec![vec![c]], Default::default()).unwrap();
        let (l, r) = (FieldElement::from_u64(2), FieldElement::from_u64(3));
        let out = permute(&spec, &[l, r]).unwrap();
        assert_eq!(out, vec![l, r + (l + c).pow(5).unwrap()]);
    }
}
