import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from core.volume import trilinear_weights
from helpers.erros import ContratoError, NumericoError
from models import DeformModel, TriMesh
from schemas import IntegratorConfig

logger = logging.getLogger(__name__)


@dataclass
class ModelGradients:
    """Gradientes com a mesma forma de `DeformModel.svf_grids[i].values` e `attn_params`."""

    svf: list[np.ndarray]
    attn: np.ndarray

    def global_norm(self) -> float:
        total = sum(float(np.sum(g * g)) for g in self.svf) + float(np.sum(self.attn * self.attn))
        return float(np.sqrt(total))


def _base_temporal(t: float) -> np.ndarray:
    return np.array([1.0, t, t * t])


def attention(attn_params, t: float) -> np.ndarray:
    """
    Pesos temporais `p(t)` no simplex: softmax dos logits `a + b t + c t^2`.
    """
    attn_params = np.asarray(attn_params, dtype=np.float64).reshape(-1, 3)
    return softmax(attn_params @ _base_temporal(t))


def _amostras(model: DeformModel, pontos):
    """Pesos trilineares e valores dos 8 cantos para cada campo."""
    saida = []
    for grade in model.svf_grids:
        indices, pesos, dpesos = trilinear_weights(grade.dims, grade.spacing, grade.origin, pontos)
        cantos = grade.values.reshape(-1, 3)[indices]
        saida.append((indices, pesos, dpesos, cantos))
    return saida


def _campos(amostras) -> np.ndarray:
    return np.stack([np.einsum("nc,ncd->nd", pesos, cantos) for _, pesos, _, cantos in amostras])


def velocity(model: DeformModel, x, t: float) -> np.ndarray:
    """
    Velocidade `u(x, t) = sum_i p_i(t) u_i(x)` com `u_i` amostrado trilinearmente.

    Aceita um ponto `(3,)` ou vários `(n, 3)`.
    """
    x = np.asarray(x, dtype=np.float64)
    unico = x.ndim == 1
    p = attention(model.attn_params, t)
    u = np.einsum("i,ind->nd", p, _campos(_amostras(model, x)))
    return u[0] if unico else u


def _limite_passo(model: DeformModel, cfg: IntegratorConfig):
    if not cfg.clamp_step:
        return None
    return cfg.max_step_mm if cfg.max_step_mm is not None else model.finest_spacing


def _limitar(deslocamento, limite):
    """Limita a norma do deslocamento de cada vértice; retorna também o fator aplicado."""
    if limite is None:
        return deslocamento, None
    norma = np.linalg.norm(deslocamento, axis=1)
    fator = np.where(norma > limite, limite / np.where(norma > 0, norma, 1.0), 1.0)
    return deslocamento * fator[:, None], fator


def integrate(
    model: DeformModel,
    cfg: IntegratorConfig,
    mesh0: TriMesh,
    *,
    return_trajectory: bool = False,
):
    """
    Fluxo de Euler explícito `v_{k+1} = v_k + h u(v_k, h k)` por K passos.

    :param return_trajectory:
        Quando verdadeiro retorna `(malha, trajetória)` com os K+1 estados.

    :raises NumericoError:
        Se surgir velocidade não finita (`divergent flow`).
    """
    h = cfg.h
    limite = _limite_passo(model, cfg)
    v = mesh0.vertices.copy()
    trajetoria = [v] if return_trajectory else None
    for k in range(cfg.K):
        u = velocity(model, v, h * k)
        if not np.all(np.isfinite(u)):
            raise NumericoError(f"divergent flow no passo {k}", code="divergent_flow")
        deslocamento, _ = _limitar(h * u, limite)
        v = v + deslocamento
        if return_trajectory:
            trajetoria.append(v)

    malha = mesh0.with_vertices(v)
    if return_trajectory:
        return malha, trajetoria
    return malha


def integrate_with_gradients(
    model: DeformModel,
    cfg: IntegratorConfig,
    mesh0: TriMesh,
    loss_grad_on_vertices,
    *,
    trajectory=None,
) -> ModelGradients:
    """
    Gradientes exatos (modo reverso) de uma perda escalar em relação a todas
    as grades e aos parâmetros de atenção.

    A varredura reversa percorre os passos de Euler armazenados; em cada
    passo o gradiente a montante atravessa o limitador, e distribuido nos 8
    nos de cada grade com os pesos trilineares e propagado para o passo
    anterior pela jacobiana espacial da velocidade.

    :param loss_grad_on_vertices:
        `dL/dv_K`, um vetor 3D por vértice da malha de saída.

    :param trajectory:
        Opcional. Trajetória já calculada por `integrate(..., return_trajectory=True)`.

    :raises ContratoError:
        Se o número de vértices do gradiente não bater com a malha.
    """
    a = np.array(loss_grad_on_vertices, dtype=np.float64)
    if a.shape != mesh0.vertices.shape:
        raise ContratoError(
            f"gradiente com forma {a.shape}, esperado {mesh0.vertices.shape}", code="vertex_mismatch"
        )
    if trajectory is None:
        _, trajectory = integrate(model, cfg, mesh0, return_trajectory=True)
    if len(trajectory) != cfg.K + 1:
        raise ContratoError("trajetória com número de passos incompatível", code="trajectory_mismatch")

    h = cfg.h
    limite = _limite_passo(model, cfg)
    grad_svf = [np.zeros((int(np.prod(g.dims)), 3)) for g in model.svf_grids]
    grad_attn = np.zeros_like(model.attn_params)

    for k in range(cfg.K - 1, -1, -1):
        t = h * k
        p = attention(model.attn_params, t)
        amostras = _amostras(model, trajectory[k])
        campos = _campos(amostras)
        u = np.einsum("i,ind->nd", p, campos)

        g_d = a
        if limite is not None:
            bruto = h * u
            _, fator = _limitar(bruto, limite)
            presos = fator < 1.0
            if np.any(presos):
                direcao = bruto[presos] / np.linalg.norm(bruto[presos], axis=1, keepdims=True)
                g = a[presos]
                g_d = a.copy()
                g_d[presos] = fator[presos, None] * (
                    g - direcao * np.einsum("nd,nd->n", direcao, g)[:, None]
                )
        g_u = h * g_d

        g_p = np.einsum("ind,nd->i", campos, g_u)
        dz = p * (g_p - np.dot(p, g_p))
        grad_attn += dz[:, None] * _base_temporal(t)[None, :]

        proximo = a.copy()
        for i, (indices, pesos, dpesos, cantos) in enumerate(amostras):
            destino = grad_svf[i]
            plano = indices.reshape(-1)
            for comp in range(3):
                contrib = (p[i] * pesos * g_u[:, comp : comp + 1]).reshape(-1)
                destino[:, comp] += np.bincount(plano, weights=contrib, minlength=len(destino))
            projecao = np.einsum("ncd,nd->nc", cantos, g_u)
            proximo += p[i] * np.einsum("nc,ncx->nx", projecao, dpesos)
        a = proximo

    svf = [g.reshape(grade.values.shape) for g, grade in zip(grad_svf, model.svf_grids)]
    return ModelGradients(svf=svf, attn=grad_attn)


def model_for_meshes(
    *meshes: TriMesh,
    margin_mm: float = 8.0,
    spacing: float = 1.0,
    R: int = 3,
    M: int = 2,
    level_factors=(1, 2, 4),
) -> DeformModel:
    """Modelo identidade cujas grades cobrem a caixa das malhas mais a margem."""
    pontos = np.concatenate([m.vertices for m in meshes], axis=0)
    minimo = pontos.min(axis=0) - margin_mm
    maximo = pontos.max(axis=0) + margin_mm
    modelo = DeformModel.zeros(
        origin=tuple(minimo),
        extent_mm=maximo - minimo,
        spacing=spacing,
        R=R,
        M=M,
        level_factors=level_factors,
    )
    logger.debug(
        "modelo R=%d M=%d dims=%s", R, M, [g.dims for g in modelo.svf_grids[:: max(M, 1)]]
    )
    return modelo
