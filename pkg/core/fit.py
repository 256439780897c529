import logging
import time

import numpy as np
from scipy.ndimage import binary_fill_holes

from core.deform import integrate, integrate_with_gradients, model_for_meshes
from core.losses import inflate_surface, is_pretrain, loss_pial, loss_white
from core.mesh import (
    isotropic_remesh,
    laplacian_smooth,
    marching_cubes,
    taubin_smooth,
    vertex_normals,
)
from core.metrics import evaluate
from core.volume import distance_transform, gaussian_smooth
from helpers.erros import AjusteDivergiuError, ArgumentoError, EntradaDegeneradaError, NumericoError
from helpers.logs import kv
from models import DeformModel, TriMesh, Volume3
from schemas import FitConfig, FitReport, TraceEntry

logger = logging.getLogger(__name__)


class Adam:
    """Adam sobre uma lista de arrays, atualizados no lugar."""

    def __init__(self, params: list[np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]):
        self.t += 1
        corr1 = 1.0 - self.beta1**self.t
        corr2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / corr1) / (np.sqrt(v / corr2) + self.eps)


def _comprimento_para(malha: TriMesh, alvo_vertices: int) -> float:
    area = float(malha.face_areas().sum())
    return float(np.sqrt(2.0 * area / (np.sqrt(3.0) * alvo_vertices)))


def build_initial_surface(
    template_wm_seg: Volume3,
    sigma_mm: float = 6.0,
    level: float = 1.5,
    target_vertices: int = 10000,
    *,
    smooth_iters: int = 2,
    remesh_iters: int = 5,
    max_rounds: int = 10,
) -> TriMesh:
    """
    Gera a malha inicial a partir de um template de substância branca.

    SDF do template, suavização gaussiana, marching cubes no nível `level` e
    rodadas alternadas de suavização laplaciana e remalhagem isotrópica até o
    número de vértices ficar a 5% de `target_vertices`.

    :raises EntradaDegeneradaError:
        Se o nível não existir no SDF suavizado.

    :raises NumericoError:
        Se a malha final não for genus 0.
    """
    if target_vertices < 4:
        raise ArgumentoError("target_vertices deve ser >= 4")
    sdf = gaussian_smooth(distance_transform(template_wm_seg), sigma_mm)
    if not (sdf.data.min() < level < sdf.data.max()):
        raise EntradaDegeneradaError("template too thin for chosen level", code="template_too_thin")

    malha = marching_cubes(sdf, level, close_boundary=True)
    logger.info("superfície inicial extraída %s", kv(V=malha.n_vertices, F=malha.n_faces, nivel=level))

    comprimento = _comprimento_para(malha, target_vertices)
    for rodada in range(max_rounds):
        malha = laplacian_smooth(malha, smooth_iters, 0.5)
        malha = isotropic_remesh(malha, comprimento, remesh_iters)
        desvio = malha.n_vertices / target_vertices - 1.0
        logger.debug("remesh %s", kv(rodada=rodada, V=malha.n_vertices, alvo=comprimento, desvio=desvio))
        if abs(desvio) <= 0.05:
            break
        comprimento *= float(np.sqrt(malha.n_vertices / target_vertices))
    else:
        logger.warning(
            "número de vértices fora da tolerância %s",
            kv(V=malha.n_vertices, alvo=target_vertices, rodadas=max_rounds),
        )

    if malha.euler_characteristic != 2:
        logger.error("superfície inicial não é genus 0 %s", kv(chi=malha.euler_characteristic))
        raise NumericoError(
            f"initial surface is not genus 0 (chi={malha.euler_characteristic})", code="not_genus_zero"
        )
    return malha


def extract_target_boundary(seg: Volume3, taubin_iters: int = 5) -> TriMesh:
    """Fronteira de uma segmentação binária: MC do SDF no nível 0 e suavização de Taubin."""
    malha = marching_cubes(distance_transform(seg), 0.0, close_boundary=True)
    return taubin_smooth(malha, taubin_iters)


def extract_pial_target(wm_label: Volume3, cgm_label: Volume3, taubin_iters: int = 5) -> TriMesh:
    """Fronteira externa da fita cortical: união WM + cGM."""
    uniao = (np.asarray(wm_label.data) != 0) | (np.asarray(cgm_label.data) != 0)
    return extract_target_boundary(wm_label.with_data(uniao.astype(np.uint8)), taubin_iters)


def extract_outer_boundary(seg: Volume3, taubin_iters: int = 5) -> TriMesh:
    """
    Fronteira externa de um rótulo em casca (por exemplo só o cGM): as
    cavidades são preenchidas antes da extração, então a superfície interna
    não entra no alvo.
    """
    cheio = binary_fill_holes(np.asarray(seg.data) != 0)
    return extract_target_boundary(seg.with_data(cheio.astype(np.uint8)), taubin_iters)


def _preparar_modelo(entrada: TriMesh, alvo: TriMesh, cfg: FitConfig) -> DeformModel:
    return model_for_meshes(
        entrada,
        alvo,
        margin_mm=cfg.grid_margin_mm,
        spacing=cfg.grid_spacing,
        R=cfg.R,
        M=cfg.M,
        level_factors=cfg.level_factors,
    )


def _carregar(model: DeformModel, theta: list[np.ndarray], cfg: FitConfig):
    for grade, valores in zip(model.svf_grids, theta[:-1]):
        grade.values = valores * cfg.param_scale
    model.attn_params = theta[-1] * cfg.attn_scale


def _ajustar(entrada: TriMesh, alvo: TriMesh, cfg: FitConfig, perda, usa_pretreino: bool):
    inicio = time.perf_counter()
    model = _preparar_modelo(entrada, alvo, cfg)
    theta = [g.values / cfg.param_scale for g in model.svf_grids]
    theta.append(model.attn_params / cfg.attn_scale)
    otimizador = Adam(theta, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)

    report = FitReport(stage=cfg.stage, iters=cfg.iters)
    fase_anterior = None
    for it in range(cfg.iters):
        fase = "pretrain" if usa_pretreino and is_pretrain(it, cfg.losses) else "main"
        if fase != fase_anterior:
            logger.info("fase %s", kv(stage=cfg.stage, fase=fase, it=it))
            fase_anterior = fase

        _carregar(model, theta, cfg)
        try:
            pred, trajetoria = integrate(model, cfg.integrator, entrada, return_trajectory=True)
            valor = perda(pred, it)
            if not np.isfinite(valor.value) or not np.all(np.isfinite(valor.grad)):
                raise NumericoError("divergent flow (perda não finita)", code="divergent_flow")
            grads = integrate_with_gradients(
                model, cfg.integrator, entrada, valor.grad, trajectory=trajetoria
            )
        except NumericoError as exc:
            report.status = "divergent"
            report.error = exc.detail
            report.timings["fit_s"] = time.perf_counter() - inicio
            logger.error("ajuste divergiu %s", kv(stage=cfg.stage, it=it))
            raise AjusteDivergiuError(exc.detail, report=report, code="divergent_flow") from exc

        g_theta = [g * cfg.param_scale for g in grads.svf]
        g_theta.append(grads.attn * cfg.attn_scale)
        norma = float(np.sqrt(sum(float(np.sum(g * g)) for g in g_theta)))
        cortado = fase == "main" and norma > cfg.clip_norm
        if cortado:
            fator = cfg.clip_norm / norma
            g_theta = [g * fator for g in g_theta]
            report.n_clipped += 1
            logger.info("gradiente cortado %s", kv(stage=cfg.stage, it=it, norma=norma))

        termos = {k: float(v) for k, v in valor.terms.items() if k != "total"}
        report.trace.append(
            TraceEntry(
                iteration=it,
                phase=fase,
                total=float(valor.value),
                terms=termos,
                grad_norm=norma,
                clipped=cortado,
            )
        )
        logger.debug("iteração %s", kv(stage=cfg.stage, it=it, fase=fase, total=valor.value, grad=norma))
        otimizador.step(theta, g_theta)

    _carregar(model, theta, cfg)
    try:
        final = integrate(model, cfg.integrator, entrada)
    except NumericoError as exc:
        report.status = "divergent"
        report.error = exc.detail
        raise AjusteDivergiuError(exc.detail, report=report, code="divergent_flow") from exc

    report.initial_loss = report.trace[0].total
    # avaliada na fase da última iteração executada
    report.final_loss = float(perda(final, report.trace[-1].iteration).value)
    report.metrics = evaluate(final, alvo, n_samples=cfg.metric_samples, seed=cfg.seed)
    report.selfx_faces = report.metrics.selfx_faces
    report.selfx_rate = report.metrics.selfx_rate
    report.timings["fit_s"] = time.perf_counter() - inicio
    logger.info(
        "ajuste concluido %s",
        kv(
            stage=cfg.stage,
            inicial=report.initial_loss,
            final=report.final_loss,
            assd=report.metrics.assd_mm,
            selfx=report.selfx_faces,
            cortes=report.n_clipped,
            segundos=report.timings["fit_s"],
        ),
    )
    return model, final, report


def fit_white(init: TriMesh, wm_target: TriMesh, cfg: FitConfig):
    """
    Ajuste da superfície branca com `loss_white`.

    :return:
        `(modelo, malha deformada, relatório)`.

    :raises AjusteDivergiuError:
        Se o fluxo divergir; o relatório parcial vem no erro.
    """
    if cfg.stage != "white":
        cfg = cfg.model_copy(update={"stage": "white"})

    def perda(pred, _it):
        return loss_white(pred, wm_target, cfg.losses)

    return _ajustar(init, wm_target, cfg, perda, usa_pretreino=False)


def fit_pial(white_pred: TriMesh, cgm_target: TriMesh, cfg: FitConfig):
    """
    Ajuste da superfície pial partindo da branca prevista.

    Primeiro `pretrain_iters` iterações de MSE contra a branca inflada e
    depois a perda fraca. A malha de saída tem a conectividade de
    `white_pred`.
    """
    if cfg.stage != "pial":
        cfg = cfg.model_copy(update={"stage": "pial"})
    losses = cfg.losses
    inflada = inflate_surface(white_pred, losses.gamma, losses.n_inflate_steps)
    normais = vertex_normals(white_pred)

    def perda(pred, it):
        return loss_pial(
            pred, cgm_target, white_pred, losses, iteration=it, inflated=inflada, normals=normais
        )

    return _ajustar(white_pred, cgm_target, cfg, perda, usa_pretreino=True)
