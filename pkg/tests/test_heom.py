import numpy as np
import pytest
from numpy.testing import assert_allclose

from epmodes import linalg
from epmodes.environment import CorrelationSpec, ExponentTerm, bandgap, exponents_for, lorentzian
from epmodes.errors import BlockMixingError, ParameterError
from epmodes.heom import (
    HeomModel,
    block_decompose,
    build_heom_general,
    build_heom_rwa,
    enumerate_ados,
    initial_state,
    project_system,
)
from references import (
    enumerate_multisets,
    heom_coherence_block,
    heom_coherence_conj_block,
    heom_population_block,
    random_density_matrix,
)

LAM = 1.0
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)


def gapless_heom(gam, tier=2):
    return HeomModel.rwa_zero_temperature(exponents_for(lorentzian(gam, LAM)), tier=tier)


class TestEnumeration:
    def test_single_emission_exponent(self):
        spec = exponents_for(lorentzian(0.5, LAM))
        model = HeomModel.rwa_zero_temperature(spec, tier=2, include_conjugate_side=False)
        ados = enumerate_ados(model)
        assert [a.entries for a in ados] == [(), (1,), (1, 1)]

    def test_tier_zero(self):
        model = gapless_heom(0.5, tier=0)
        assert [a.entries for a in enumerate_ados(model)] == [()]

    def test_two_exponents_tier_one(self):
        spec = exponents_for(bandgap(0.3, LAM, gap_fraction=0.25))
        model = HeomModel.rwa_zero_temperature(spec, tier=1, include_conjugate_side=False)
        assert [a.entries for a in enumerate_ados(model)] == [(), (1,), (2,)]

    @pytest.mark.parametrize("n_exp,tier", [(1, 3), (2, 2), (3, 2), (4, 2)])
    def test_matches_multiset_oracle(self, n_exp, tier):
        terms = tuple(ExponentTerm(weight=0.1 * (i + 1), decay=1.0 + i) for i in range(n_exp))
        model = HeomModel.rwa_zero_temperature(
            CorrelationSpec(terms=terms), tier=tier, include_conjugate_side=False
        )
        got = [a.entries for a in enumerate_ados(model)]
        assert got == enumerate_multisets(n_exp, tier)

    def test_conjugate_side_doubles_symbols(self):
        model = gapless_heom(0.5, tier=2)
        labels = [e.label for e in model.exponents]
        assert labels == ["+1", "-1"]
        assert len(enumerate_ados(model)) == 6  # 1 + 2 + 3 multisets

    def test_manifest_lines(self):
        gen = build_heom_rwa(gapless_heom(0.5))
        manifest = gen.ado_manifest().strip().splitlines()
        assert len(manifest) == 6
        assert manifest[0] == "0 level=0 []"
        assert manifest[-1] == "5 level=2 [-1,-1]"


class TestRwaGenerator:
    def test_gapless_dimension(self):
        gen = build_heom_rwa(gapless_heom(0.5))
        assert gen.matrix.shape == (24, 24)

    def test_bandgap_dimension(self):
        spec = exponents_for(bandgap(0.3, LAM, gap_fraction=0.25))
        gen = build_heom_rwa(HeomModel.rwa_zero_temperature(spec, tier=2))
        assert gen.matrix.shape == (60, 60)

    def test_tier_zero_is_bare_commutator(self):
        h_sys = np.diag([0.0, 0.7]).astype(complex)
        spec = exponents_for(lorentzian(0.5, LAM))
        model = HeomModel.rwa_zero_temperature(spec, h_sys=h_sys, tier=0)
        gen = build_heom_rwa(model)
        assert_allclose(gen.matrix, linalg.liouvillian_from_parts(h_sys), atol=1e-15)

    def test_level_zero_couples_only_to_level_one(self):
        gen = build_heom_rwa(gapless_heom(0.5, tier=2))
        top_rows = gen.matrix[:4]
        # columns of level-2 ADOs (positions 3, 4, 5) never feed the system row
        for pos in (3, 4, 5):
            block = top_rows[:, pos * 4 : (pos + 1) * 4]
            assert np.abs(block).max() < 1e-15

    def test_trace_row_annihilated(self):
        gen = build_heom_rwa(gapless_heom(0.8))
        trace_vec = np.zeros(gen.dim, dtype=complex)
        trace_vec[:4] = linalg.vec(np.eye(2)).conj()
        residual = trace_vec @ gen.matrix
        assert np.abs(residual).max() < 1e-13

    def test_empty_exponent_set_warns(self):
        model = HeomModel(np.zeros((2, 2)), np.zeros((2, 2)), (), rwa=True, tier=2)
        with pytest.warns(UserWarning):
            gen = build_heom_rwa(model)
        assert gen.matrix.shape == (4, 4)


class TestReferenceBlocks:
    @pytest.mark.parametrize("gam", [0.3, 0.5, 0.9])
    def test_blocks_match_reference_matrices(self, gam):
        blocks = block_decompose(build_heom_rwa(gapless_heom(gam)))
        assert np.abs(blocks.population - heom_population_block(gam, LAM)).max() < 1e-14
        assert np.abs(blocks.coherence - heom_coherence_block(gam, LAM)).max() < 1e-14
        assert np.abs(
            blocks.coherence_conj - heom_coherence_conj_block(gam, LAM)
        ).max() < 1e-14

    def test_block_sizes(self):
        blocks = block_decompose(build_heom_rwa(gapless_heom(0.5)))
        assert blocks.population.shape == (6, 6)
        assert blocks.coherence.shape == (5, 5)
        assert blocks.coherence_conj.shape == (5, 5)
        assert sum(b.shape[0] for b in blocks.extra_blocks) == 24 - 16

    def test_population_block_spectrum_at_ep(self):
        blocks = block_decompose(build_heom_rwa(gapless_heom(0.5)))
        vals = np.sort(np.linalg.eigvals(blocks.population).real)
        # The defective triple splits by the cube root of machine epsilon.
        assert_allclose(vals, [-2.0, -1.0, -1.0, -1.0, -1.0, 0.0], atol=1e-4)
        report = linalg.jordan_structure(blocks.population, -LAM, tol_cluster=1e-4)
        assert report.chain_lengths == (3, 1)
        assert abs(report.eigenvalue + LAM) < 1e-8  # cluster mean is far sharper

    def test_coherence_block_spectrum_at_ep(self):
        blocks = block_decompose(build_heom_rwa(gapless_heom(0.5)))
        vals = linalg.eigendecompose(blocks.coherence).eigenvalues
        expected = np.sort_complex(
            np.array([-2.0, (-3 - 1j) / 2, (-3 + 1j) / 2, -0.5, -0.5]) * LAM
        )
        assert_allclose(vals, expected, atol=1e-7)
        report = linalg.jordan_structure(blocks.coherence, -0.5 * LAM, tol_cluster=1e-5)
        assert report.chain_lengths == (2,)

    def test_mixing_raises(self):
        # A transverse system Hamiltonian couples populations to coherences.
        h_sys = 0.5 * np.diag([0.0, 1.0]) + 0.3 * SIGMA_X
        model = HeomModel.general(
            h_sys, SIGMA_X, real_exponents=[(0.25, 1.0)], tier=1
        )
        gen = build_heom_general(model)
        with pytest.raises(BlockMixingError):
            block_decompose(gen)


class TestGeneralGenerator:
    def test_dimension_bookkeeping(self):
        model = HeomModel.general(
            np.zeros((2, 2)), SIGMA_X, real_exponents=[(0.25, 1.0)], tier=1
        )
        gen = build_heom_general(model)
        assert gen.matrix.shape == (8, 8)

    def test_decoupled_when_q_vanishes(self):
        model = HeomModel.general(
            np.diag([0.0, 1.0]), np.zeros((2, 2)),
            real_exponents=[(0.25, 1.0)], imag_exponents=[(0.1, 0.5)], tier=2,
        )
        gen = build_heom_general(model)
        off = gen.matrix.copy()
        for pos in range(len(gen.ado_indices)):
            off[pos * 4 : (pos + 1) * 4, pos * 4 : (pos + 1) * 4] = 0.0
        assert np.abs(off).max() < 1e-15

    def test_trace_row_annihilated(self):
        model = HeomModel.general(
            np.diag([0.0, 0.3]), SIGMA_X,
            real_exponents=[(0.25, 1.0), (0.05, 2.0)], imag_exponents=[(0.1, 0.5)], tier=2,
        )
        gen = build_heom_general(model)
        trace_vec = np.zeros(gen.dim, dtype=complex)
        trace_vec[:4] = linalg.vec(np.eye(2)).conj()
        assert np.abs(trace_vec @ gen.matrix).max() < 1e-13

    def test_rwa_mismatch_rejected(self):
        model = gapless_heom(0.5)
        with pytest.raises(ParameterError):
            build_heom_general(model)


class TestProjection:
    def test_initial_condition_round_trip(self):
        gen = build_heom_rwa(gapless_heom(0.5))
        rho0 = np.array([[0.25, 0.1j], [-0.1j, 0.75]], dtype=complex)
        state = initial_state(gen, rho0)
        assert_allclose(project_system(state, gen), rho0, atol=1e-15)
        assert np.abs(state[4:]).max() == 0.0

    def test_pure_ado_excitation_projects_to_zero(self):
        gen = build_heom_rwa(gapless_heom(0.5))
        state = np.zeros(gen.dim, dtype=complex)
        state[5] = 1.0  # a level-1 ADO component
        assert np.abs(project_system(state, gen)).max() == 0.0

    def test_propagated_state_stays_physical(self):
        rng = np.random.default_rng(3)
        gen = build_heom_rwa(gapless_heom(0.8))
        rho0 = random_density_matrix(rng, 2)
        flow = linalg.propagate(gen.matrix, initial_state(gen, rho0), [0.0, 1.0, 4.0], method="ode")
        for v in flow:
            rho = project_system(v, gen)
            assert abs(np.trace(rho) - 1.0) < 1e-9
            assert np.abs(rho - rho.conj().T).max() < 1e-9
            assert np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() > -1e-9

    def test_length_mismatch(self):
        gen = build_heom_rwa(gapless_heom(0.5))
        with pytest.raises(ValueError):
            project_system(np.zeros(7), gen)


class TestSpectralConsistencyWithPseudomodes:
    def test_dynamically_weighted_eigenvalues_appear_in_blocks(self):
        # Every sector eigenvalue of the pseudomode generator that carries
        # nonzero weight in the reduced dynamics must also be present in the
        # hierarchy block spectra.
        from epmodes.pseudomode import (
            restrict_single_excitation,
            sector_initial_vector,
            sector_reduce,
            spin_boson_model,
        )

        gam = 0.3
        spec = exponents_for(lorentzian(gam, LAM))
        model = spin_boson_model(spec)
        ext = restrict_single_excitation(model)
        vals, vecs = np.linalg.eig(ext.matrix)
        rho0 = np.array([[0.4, 0.25 - 0.1j], [0.25 + 0.1j, 0.6]], dtype=complex)
        coeffs = np.linalg.solve(vecs, sector_initial_vector(model, rho0))
        weighted = []
        for k in range(vals.size):
            reduced = sector_reduce(model, vecs[:, k])
            if abs(coeffs[k]) * np.abs(reduced).max() > 1e-10:
                weighted.append(vals[k])
        assert weighted, "expected dynamically relevant eigenvalues"

        blocks = block_decompose(build_heom_rwa(gapless_heom(gam, tier=2)))
        heom_vals = np.concatenate(
            [
                np.linalg.eigvals(blocks.population),
                np.linalg.eigvals(blocks.coherence),
                np.linalg.eigvals(blocks.coherence_conj),
            ]
        )
        for lam in weighted:
            assert np.abs(heom_vals - lam).min() < 1e-8
