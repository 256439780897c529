import numpy as np
import pytest

from core.losses import (
    boundary_loss,
    chamfer_bi,
    edge_loss,
    inflate_surface,
    inflation_grad_at_identity,
    inflation_loss,
    is_pretrain,
    loss_pial,
    loss_white,
    mse_pretrain_loss,
    normal_consistency_loss,
)
from core.mesh import vertex_normals
from helpers.erros import ArgumentoError, ContratoError, EntradaDegeneradaError
from models import TriMesh
from schemas import LossConfig
from tests.conftest import icosfera, placa_plana, tetraedro_regular


def _pontos(*coords) -> TriMesh:
    return TriMesh(np.array(coords, dtype=np.float64), np.zeros((0, 3), dtype=np.int64))


N_INSTANCIAS = 100


def _conferir_gradiente(funcao, malha: TriMesh, rng, n_coordenadas=9, eps=1e-6, rel=1e-5, abs_=1e-8):
    """Diferenças centrais em `n_coordenadas` coordenadas sorteadas da malha."""
    analitico = funcao(malha).grad
    escolhidas = rng.choice(3 * malha.n_vertices, size=n_coordenadas, replace=False)
    for i, eixo in zip(*np.divmod(escolhidas, 3)):
        vertices = malha.vertices.copy()
        vertices[i, eixo] += eps
        mais = funcao(malha.with_vertices(vertices)).value
        vertices[i, eixo] -= 2 * eps
        menos = funcao(malha.with_vertices(vertices)).value
        assert analitico[i, eixo] == pytest.approx((mais - menos) / (2 * eps), rel=rel, abs=abs_)


def _amassada(rng, subdivisions=1, raio=2.0, escala=0.1):
    esfera = icosfera(subdivisions, raio)
    return esfera.with_vertices(esfera.vertices + rng.normal(scale=escala, size=esfera.vertices.shape))


def test_chamfer_valor_conhecido():
    valor = chamfer_bi(_pontos((0, 0, 0)), _pontos((1, 0, 0), (3, 0, 0)))

    assert valor.value == pytest.approx(6.0)


def test_chamfer_identico_e_invariante(rng):
    malha = _amassada(rng)
    outra = _amassada(rng)
    c = np.array([3.0, -1.0, 2.5])

    identico = chamfer_bi(malha, malha)

    assert identico.value == 0.0
    np.testing.assert_array_equal(identico.grad, 0.0)
    assert chamfer_bi(malha.with_vertices(malha.vertices + c), outra.with_vertices(outra.vertices + c)).value == (
        pytest.approx(chamfer_bi(malha, outra).value, rel=1e-12)
    )


@pytest.mark.parametrize("semente", range(N_INSTANCIAS))
def test_chamfer_gradiente(semente):
    rng = np.random.default_rng(semente)
    alvo = _amassada(rng, raio=2.5)
    _conferir_gradiente(lambda m: chamfer_bi(m, alvo), _amassada(rng), rng)


def test_conjunto_vazio():
    with pytest.raises(EntradaDegeneradaError):
        chamfer_bi(_pontos((0, 0, 0)), TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64)))


def test_boundary_valores_conhecidos():
    pred = _pontos((0, 0, 0), (5, 0, 0))
    alvo = _pontos((1, 0, 0))

    assert boundary_loss(pred, alvo).value == pytest.approx(2.0)
    assert boundary_loss(_pontos((0, 0, 0), (5, 0, 0), (100, 0, 0)), alvo).value == pytest.approx(2.0)
    assert boundary_loss(_pontos((1, 0, 0), (7, 7, 7)), alvo).value == 0.0


@pytest.mark.parametrize("semente", range(N_INSTANCIAS))
def test_boundary_gradiente(semente):
    rng = np.random.default_rng(semente)
    alvo = _amassada(rng, raio=2.5)
    _conferir_gradiente(lambda m: boundary_loss(m, alvo), _amassada(rng, subdivisions=2), rng)


def test_inflation_valores_conhecidos():
    esfera = icosfera(2, 1.0)
    normais = vertex_normals(esfera)
    eps = 1e-12
    tangente = np.cross(normais, np.array([0.3, 0.5, 0.8]))
    tangente /= np.linalg.norm(tangente, axis=1, keepdims=True)

    alinhado = inflation_loss(esfera.with_vertices(esfera.vertices + normais), esfera, normais, eps)
    oposto = inflation_loss(esfera.with_vertices(esfera.vertices - normais), esfera, normais, eps)
    ortogonal = inflation_loss(esfera.with_vertices(esfera.vertices + tangente), esfera, normais, eps)

    assert alinhado.value == pytest.approx(1.0 - 1.0 / (1.0 + eps), abs=1e-12)
    assert oposto.value == pytest.approx(2.0)
    assert ortogonal.value == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("semente", range(N_INSTANCIAS))
def test_inflation_gradiente(semente):
    rng = np.random.default_rng(semente)
    base = icosfera(1, 2.0)
    normais = vertex_normals(base)
    pred = base.with_vertices(base.vertices + rng.normal(scale=0.3, size=base.vertices.shape))
    _conferir_gradiente(lambda m: inflation_loss(m, base, normais, 1e-12), pred, rng)


def test_inflation_na_identidade_usa_forma_fechada():
    esfera = icosfera(2, 1.0)
    normais = vertex_normals(esfera)

    valor = inflation_loss(esfera, esfera, normais, 1e-12)
    fechado = inflation_grad_at_identity(esfera, normais, 1e-12)

    np.testing.assert_allclose(valor.grad, fechado)
    np.testing.assert_allclose(fechado, -normais / (1e-12 * esfera.n_vertices))
    assert valor.value == pytest.approx(1.0)


def test_inflation_magnitude_na_identidade():
    n = 10000
    normais = np.tile([0.0, 0.0, 1.0], (n, 1))
    malha = TriMesh(np.zeros((n, 3)), np.zeros((0, 3), dtype=np.int64))

    gradiente = inflation_grad_at_identity(malha, normais, 1e-12)

    np.testing.assert_allclose(np.linalg.norm(gradiente, axis=1), 1e8)
    assert np.all(gradiente[:, 2] < 0)


def test_inflation_contagem_diferente():
    with pytest.raises(ContratoError):
        inflation_loss(icosfera(1), icosfera(2), vertex_normals(icosfera(2)), 1e-12)


def test_edge_loss_valores_conhecidos():
    tetra = tetraedro_regular()

    assert edge_loss(tetra).value == pytest.approx(1.0, abs=1e-12)
    assert edge_loss(tetra.with_vertices(3.0 * tetra.vertices)).value == pytest.approx(9.0)
    assert edge_loss(tetra.with_vertices(np.zeros((4, 3)))).value == 0.0


@pytest.mark.parametrize("semente", range(N_INSTANCIAS))
def test_edge_loss_gradiente(semente):
    rng = np.random.default_rng(semente)
    _conferir_gradiente(edge_loss, _amassada(rng), rng)


def test_normal_consistency_valores_conhecidos():
    placa = placa_plana(4)

    assert normal_consistency_loss(placa).value == pytest.approx(0.0, abs=1e-15)
    assert normal_consistency_loss(icosfera(3)).value < normal_consistency_loss(icosfera(1)).value
    assert normal_consistency_loss(icosfera(2)).value >= 0.0


@pytest.mark.parametrize("semente", range(N_INSTANCIAS))
def test_normal_consistency_gradiente(semente):
    rng = np.random.default_rng(semente)
    _conferir_gradiente(normal_consistency_loss, _amassada(rng, escala=0.2), rng)


def test_mse_pretreino():
    esfera = icosfera(1)
    d = np.array([0.5, -1.0, 2.0])

    deslocada = esfera.with_vertices(esfera.vertices + d)
    valor = mse_pretrain_loss(deslocada, esfera)

    assert mse_pretrain_loss(esfera, esfera).value == 0.0
    assert valor.value == pytest.approx(float(d @ d))
    np.testing.assert_allclose(valor.grad, np.tile(2.0 * d / esfera.n_vertices, (esfera.n_vertices, 1)))


def test_inflate_surface():
    esfera = icosfera(3, 1.0)

    inflada = inflate_surface(esfera, 0.1, 10)

    np.testing.assert_allclose(np.linalg.norm(inflada.vertices, axis=1), 2.0, rtol=0.02)
    assert inflada.same_connectivity(esfera)
    np.testing.assert_array_equal(inflate_surface(esfera, 0.1, 0).vertices, esfera.vertices)
    np.testing.assert_array_equal(inflate_surface(esfera, 0.0, 5).vertices, esfera.vertices)
    with pytest.raises(ArgumentoError):
        inflate_surface(esfera, 0.1, -1)


def test_loss_white_composicao(rng):
    pred = _amassada(rng)
    alvo = _amassada(rng, raio=2.3)

    sem_suavidade = loss_white(pred, alvo, LossConfig(w_edge=0.0, w_nc=0.0))
    completa = loss_white(pred, pred, LossConfig())

    assert sem_suavidade.value == pytest.approx(chamfer_bi(pred, alvo).value)
    np.testing.assert_allclose(sem_suavidade.grad, chamfer_bi(pred, alvo).grad)
    assert completa.value == pytest.approx(
        0.5 * edge_loss(pred).value + 5.0 * normal_consistency_loss(pred).value
    )
    assert completa.terms["total"] == pytest.approx(completa.value)


def test_loss_pial_fases(rng):
    branca = icosfera(2, 2.0)
    alvo = icosfera(2, 3.0)
    pred = branca.with_vertices(branca.vertices * 1.2)
    cfg = LossConfig(pretrain_iters=2)

    pretreino = loss_pial(pred, alvo, branca, cfg, iteration=0)
    principal = loss_pial(pred, alvo, branca, cfg, iteration=2)
    sem_inflacao = loss_pial(pred, alvo, branca, cfg.model_copy(update={"w_inflation": 0.0}))
    chamfer = loss_pial(pred, alvo, branca, cfg.model_copy(update={"pial_mode": "chamfer"}), iteration=0)

    assert "mse_pretrain" in pretreino.terms
    assert "boundary" in principal.terms and "inflation" in principal.terms
    assert sem_inflacao.value == pytest.approx(
        boundary_loss(pred, alvo).value + 0.5 * edge_loss(pred).value + 5.0 * normal_consistency_loss(pred).value
    )
    assert "chamfer_pred_to_target" in chamfer.terms


def test_is_pretrain():
    cfg = LossConfig(pretrain_iters=20)

    assert is_pretrain(0, cfg)
    assert is_pretrain(19, cfg)
    assert not is_pretrain(20, cfg)
    assert not is_pretrain(None, cfg)
    assert not is_pretrain(0, cfg.model_copy(update={"pial_mode": "chamfer"}))
