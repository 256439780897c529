import numpy as np
import pytest
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from core import fit as modulo_fit
from core.fit import (
    Adam,
    build_initial_surface,
    extract_outer_boundary,
    extract_pial_target,
    extract_target_boundary,
    fit_pial,
    fit_white,
)
from core.losses import LossValue, loss_pial
from core.mesh import count_self_intersections
from core.metrics import assd
from core.phantom import generate
from helpers.erros import AjusteDivergiuError, EntradaDegeneradaError, NumericoError
from models import Volume3
from schemas import FitConfig, PhantomSpec
from tests.conftest import bola, icosfera


def test_adam_primeiro_passo_tem_tamanho_lr():
    parametro = np.array([1.0, -2.0, 3.0])
    otimizador = Adam([parametro], lr=0.1)

    otimizador.step([parametro], [np.array([5.0, -0.01, 0.0])])

    np.testing.assert_allclose(parametro, [0.9, -1.9, 3.0], atol=1e-6)


def test_build_initial_surface_genus_zero():
    malha = build_initial_surface(bola(40, 12.0), sigma_mm=2.0, level=1.5, target_vertices=2000)

    assert malha.is_watertight()
    assert malha.euler_characteristic == 2
    assert abs(malha.n_vertices / 2000 - 1.0) <= 0.1
    raio = np.linalg.norm(malha.vertices - malha.vertices.mean(axis=0), axis=1).mean()
    assert 12.0 < raio < 15.5


def test_build_initial_surface_template_fino():
    with pytest.raises(EntradaDegeneradaError) as erro:
        build_initial_surface(bola(24, 3.0), sigma_mm=6.0, level=30.0, target_vertices=500)
    assert erro.value.code == "template_too_thin"


def test_extract_target_boundary_esfera():
    malha = extract_target_boundary(bola(40, 10.0), taubin_iters=5)

    raios = np.linalg.norm(malha.vertices, axis=1)
    assert abs(raios.mean() - 10.0) < 0.5
    assert malha.is_watertight()


def test_extract_pial_target_usa_uniao(fantoma_pequeno):
    fantoma = generate(fantoma_pequeno)

    alvo = extract_pial_target(fantoma.wm_label, fantoma.cgm_label, taubin_iters=2)

    raios = np.linalg.norm(alvo.vertices, axis=1)
    assert raios.mean() > np.linalg.norm(fantoma.white_gt.vertices, axis=1).mean()


def _componentes(malha) -> int:
    arestas = malha.edges
    adjacencia = coo_matrix(
        (np.ones(len(arestas)), (arestas[:, 0], arestas[:, 1])), shape=(malha.n_vertices,) * 2
    )
    return connected_components(adjacencia, directed=False)[0]


def _toro(n: int = 40, raio_maior: float = 10.0, raio_menor: float = 4.0) -> Volume3:
    origem = -(n - 1) / 2.0
    eixo = origem + np.arange(n)
    xx, yy, zz = np.meshgrid(eixo, eixo, eixo, indexing="ij")
    dentro = (np.sqrt(xx**2 + yy**2) - raio_maior) ** 2 + zz**2 < raio_menor**2
    return Volume3(dentro.astype(np.uint8), (1.0,) * 3, (origem,) * 3)


def test_build_initial_surface_toro_nao_e_genus_zero():
    with pytest.raises(NumericoError) as erro:
        build_initial_surface(_toro(), sigma_mm=1.0, level=0.5, target_vertices=800)
    assert erro.value.code == "not_genus_zero"
    assert erro.value.exit_code == 4


def test_extract_outer_boundary_descarta_superficie_interna():
    casca = (bola(40, 12.0).data != 0) & (bola(40, 8.0).data == 0)
    rotulo = bola(40, 12.0).with_data(casca.astype(np.uint8))

    ingenua = extract_target_boundary(rotulo, 5)
    externa = extract_outer_boundary(rotulo, 5)

    assert _componentes(ingenua) == 2
    assert _componentes(externa) == 1
    assert (np.linalg.norm(externa.vertices, axis=1) < 10.0).sum() == 0
    assert externa.is_watertight()


def test_fit_white_reduz_a_perda(fit_rapido):
    inicial = icosfera(2, 7.0)
    alvo = icosfera(3, 8.0)

    modelo, malha, report = fit_white(inicial, alvo, fit_rapido.model_copy(update={"iters": 15}))

    assert report.status == "ok"
    assert report.stage == "white"
    assert len(report.trace) == 15
    assert all(entrada.phase == "main" for entrada in report.trace)
    assert report.final_loss < report.initial_loss
    assert malha.same_connectivity(inicial)
    assert modelo.n_fields == 2
    assert report.metrics.assd_mm < assd(inicial, alvo, 2000)
    assert report.selfx_faces == report.metrics.selfx_faces
    assert "fit_s" in report.timings
    assert "timings" not in report.to_json()


def test_fit_pial_pretreino_e_fase_principal(fit_rapido):
    branca = icosfera(2, 7.0)
    alvo = icosfera(3, 9.0)

    _, malha, report = fit_pial(branca, alvo, fit_rapido)

    fases = [entrada.phase for entrada in report.trace]
    assert fases == ["pretrain"] * 3 + ["main"] * 5
    assert "mse_pretrain" in report.trace[0].terms
    assert "boundary" in report.trace[-1].terms
    assert malha.same_connectivity(branca)
    assert np.isfinite(report.final_loss)


def test_corte_de_gradiente_so_na_fase_principal(fit_rapido):
    cfg = fit_rapido.model_copy(update={"clip_norm": 1e-12})

    _, _, report = fit_pial(icosfera(2, 7.0), icosfera(3, 9.0), cfg)

    assert report.n_clipped == 5
    assert [entrada.clipped for entrada in report.trace] == [False] * 3 + [True] * 5


def test_perda_final_na_fase_de_pretreino_quando_ela_cobre_tudo(fit_rapido):
    cfg = fit_rapido.model_copy(
        update={"losses": fit_rapido.losses.model_copy(update={"pretrain_iters": fit_rapido.iters})}
    )
    branca, alvo = icosfera(2, 7.0), icosfera(3, 9.0)

    _, malha, report = fit_pial(branca, alvo, cfg)

    assert all(entrada.phase == "pretrain" for entrada in report.trace)
    esperado = loss_pial(malha, alvo, branca, cfg.losses, iteration=0)
    assert "mse_pretrain" in esperado.terms
    assert report.final_loss == pytest.approx(esperado.value)


def test_divergencia_devolve_relatorio_parcial(fit_rapido, monkeypatch):
    chamadas = []

    def perda_divergente(pred, alvo, cfg):
        chamadas.append(1)
        valor = np.nan if len(chamadas) > 2 else 1.0
        return LossValue(valor, np.zeros_like(pred.vertices), {"total": valor})

    monkeypatch.setattr(modulo_fit, "loss_white", perda_divergente)

    with pytest.raises(AjusteDivergiuError) as erro:
        fit_white(icosfera(1, 5.0), icosfera(1, 6.0), fit_rapido)

    assert erro.value.exit_code == 4
    assert erro.value.report.status == "divergent"
    assert len(erro.value.report.trace) == 2


@pytest.mark.slow
def test_fantoma_branca_assd_abaixo_de_um_voxel():
    spec = PhantomSpec()
    fantoma = generate(spec)
    alvo = extract_target_boundary(fantoma.wm_label)
    inicial = build_initial_surface(fantoma.wm_label, 6.0, 1.5, 10000)

    _, malha, report = fit_white(inicial, alvo, FitConfig(iters=200))

    assert report.final_loss <= report.initial_loss
    assert assd(malha, fantoma.white_gt) <= 1.0
    assert count_self_intersections(malha) / malha.n_faces < 5e-4


@pytest.mark.slow
def test_fantoma_pial_quase_sem_autointersecoes():
    fantoma = generate(PhantomSpec())
    inicial = build_initial_surface(fantoma.wm_label, 6.0, 1.5, 10000)
    _, branca, _ = fit_white(inicial, extract_target_boundary(fantoma.wm_label), FitConfig(iters=200))
    alvo = extract_pial_target(fantoma.wm_label, fantoma.cgm_label_pve)

    _, pial, report = fit_pial(branca, alvo, FitConfig(stage="pial", iters=200))

    assert pial.same_connectivity(branca)
    assert count_self_intersections(pial) / pial.n_faces < 5e-4
    assert report.selfx_rate < 5e-4
