//! Cat-code logical operators and helpers that move memory objects into the
//! model space (memory first, buffer in its vacuum).

use crate::error::Result;
use crate::fock::{cat_state, fock_state, partial_trace, tensor_states, CMatrix, CVector, ModeSpace, QuantumState, Repr, Space, C64};
use crate::wigner::{displacement_elements, ln_factorials};

fn ket(state: &QuantumState) -> CVector {
    match state.repr() {
        Repr::Pure(v) => v.clone(),
        Repr::Mixed(_) => unreachable!("cat_state is pure"),
    }
}

/// (|C⁺_α⟩, |C⁻_α⟩).
pub fn cat_basis(ms: ModeSpace, alpha: C64) -> Result<(CVector, CVector)> {
    Ok((ket(&cat_state(ms, alpha, 0.0)?), ket(&cat_state(ms, alpha, std::f64::consts::PI)?)))
}

/// Logical (σ_x, σ_y, σ_z) with |0_L⟩ ≈ |α⟩, |1_L⟩ ≈ |−α⟩, so σ_x is the
/// parity inside the code and σ_z = |C⁺⟩⟨C⁻| + h.c.
pub fn logical_paulis(ms: ModeSpace, alpha: C64) -> Result<[CMatrix; 3]> {
    let (p, m) = cat_basis(ms, alpha)?;
    let pp = &p * p.adjoint();
    let mm = &m * m.adjoint();
    let pm = &p * m.adjoint();
    let mp = &m * p.adjoint();
    let i = C64::i();
    Ok([&pp - &mm, &pm * i - &mp * i, &pm + &mp])
}

/// (2/π)[D(2α)P − D(−2α)P] = W-difference observable W(α) − W(−α), with
/// the untruncated displacement restricted to the retained block.
pub fn wigner_difference_observable(dim: usize, alpha: C64) -> CMatrix {
    let lnf = ln_factorials(dim);
    let mut o = displacement_elements(dim, alpha * 2.0, &lnf) - displacement_elements(dim, -alpha * 2.0, &lnf);
    for n in (1..dim).step_by(2) {
        for m in 0..dim {
            o[(m, n)] = -o[(m, n)];
        }
    }
    o * C64::new(std::f64::consts::FRAC_2_PI, 0.0)
}

/// Memory dimension of a one- or two-mode model space.
pub fn memory_space(space: &Space) -> Result<ModeSpace> {
    space.mode(0)
}

/// `op ⊗ |0⟩⟨0|` on two modes, `op` on one.
pub fn lift_memory_projected(space: &Space, op: &CMatrix) -> CMatrix {
    if space.n_modes() == 1 {
        return op.clone();
    }
    let rest: usize = space.dims()[1..].iter().product();
    let mut vac = CMatrix::zeros(rest, rest);
    vac[(0, 0)] = C64::new(1.0, 0.0);
    op.kronecker(&vac)
}

/// Memory state tensored with vacuum on the remaining modes.
pub fn lift_memory_state(space: &Space, mem: &QuantumState) -> Result<QuantumState> {
    if space.n_modes() == 1 {
        return Ok(mem.clone());
    }
    let mut parts = vec![mem.clone()];
    for &d in &space.dims()[1..] {
        parts.push(fock_state(ModeSpace::new(d)?, 0)?);
    }
    let refs: Vec<&QuantumState> = parts.iter().collect();
    Ok(tensor_states(&refs))
}

pub fn reduce_to_memory(state: &QuantumState) -> Result<QuantumState> {
    if state.space().n_modes() == 1 { Ok(state.clone()) } else { partial_trace(state, 0) }
}

/// ⟨(−1)^{n_m}⟩.
pub fn memory_parity(state: &QuantumState) -> f64 {
    let s = state.space();
    (0..s.total()).map(|i| if s.occupation(i, 0) % 2 == 0 { state.population(i) } else { -state.population(i) }).sum()
}

/// Tr(ρ O).
pub fn trace_with(rho: &CMatrix, o: &CMatrix) -> C64 {
    let n = rho.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += rho[(i, j)] * o[(j, i)];
        }
    }
    acc
}

/// Logical Bloch vector of a memory (or memory ⊗ buffer) state.
pub fn bloch_vector(state: &QuantumState, paulis: &[CMatrix; 3]) -> Result<[f64; 3]> {
    let rho = reduce_to_memory(state)?.density();
    Ok([trace_with(&rho, &paulis[0]).re, trace_with(&rho, &paulis[1]).re, trace_with(&rho, &paulis[2]).re])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::coherent_state;
    use crate::wigner::wigner_cat;

    #[test]
    fn paulis_form_su2() {
        let ms = ModeSpace::new(24).unwrap();
        let [x, y, z] = logical_paulis(ms, C64::new(2.0, 0.0)).unwrap();
        let i = C64::i();
        assert!((&x * &y - &z * i).camax() < 1e-12);
        assert!((&y * &z - &x * i).camax() < 1e-12);
        let a = coherent_state(ms, C64::new(2.0, 0.0)).unwrap();
        let b = bloch_vector(&a, &[x, y, z]).unwrap();
        assert!((b[2] - 1.0).abs() < 1e-3 && b[0].abs() < 1e-3);
    }

    #[test]
    fn difference_observable_on_cat() {
        let ms = ModeSpace::new(30).unwrap();
        let alpha = C64::new(1.7, 0.3);
        let o = wigner_difference_observable(30, alpha);
        let cat = cat_state(ms, alpha, 0.0).unwrap();
        let v = trace_with(&cat.density(), &o).re;
        let expect = wigner_cat(alpha, true, alpha) - wigner_cat(alpha, true, -alpha);
        assert!(v.abs() < 1e-10 && expect.abs() < 1e-10);
        let coh = coherent_state(ms, alpha).unwrap();
        let w = trace_with(&coh.density(), &o).re;
        assert!((w - std::f64::consts::FRAC_2_PI * (1.0 - (-8.0 * alpha.norm_sqr()).exp())).abs() < 1e-10);
    }
}
