import logging
from dataclasses import dataclass, field

import numpy as np

from core.mesh import nearest_vertices, vertex_normals
from helpers.erros import ArgumentoError, ContratoError, EntradaDegeneradaError
from models import TriMesh
from schemas import LossConfig

logger = logging.getLogger(__name__)


@dataclass
class LossValue:
    """Valor escalar, gradiente por vértice da malha prevista e parcelas nomeadas."""

    value: float
    grad: np.ndarray
    terms: dict[str, float] = field(default_factory=dict)


def _acumular(indices, valores, n):
    saida = np.zeros((n, 3))
    for comp in range(3):
        saida[:, comp] = np.bincount(indices, weights=valores[:, comp], minlength=n)
    return saida


def _nao_vazias(*malhas: TriMesh):
    for malha in malhas:
        if malha.n_vertices == 0:
            raise EntradaDegeneradaError("empty vertex set", code="empty_vertex_set")


def _mesma_contagem(a: TriMesh, b: TriMesh):
    if a.n_vertices != b.n_vertices:
        raise ContratoError(
            f"número de vértices incompatível: {a.n_vertices} != {b.n_vertices}",
            code="vertex_mismatch",
        )


def chamfer_bi(pred: TriMesh, target: TriMesh) -> LossValue:
    """
    Chamfer bidirecional vértice a vértice (mm^2).

    As correspondências de vizinho mais próximo ficam fixas no cálculo do
    gradiente.
    """
    _nao_vazias(pred, target)
    v, alvo = pred.vertices, target.vertices
    idx_pa, d_pa = nearest_vertices(v, target)
    idx_ap, d_ap = nearest_vertices(alvo, pred)

    ida = float(d_pa.mean())
    volta = float(d_ap.mean())
    grad = 2.0 * (v - alvo[idx_pa]) / len(v)
    grad += _acumular(idx_ap, 2.0 * (v[idx_ap] - alvo) / len(alvo), len(v))
    return LossValue(ida + volta, grad, {"chamfer_pred_to_target": ida, "chamfer_target_to_pred": volta})


def boundary_loss(pred: TriMesh, target: TriMesh) -> LossValue:
    """
    Perda de fronteira unidirecional: `2 * media_j min_i |t_j - v_i|^2`.

    Vértices previstos longe do alvo não aumentam o valor.
    """
    _nao_vazias(pred, target)
    v, alvo = pred.vertices, target.vertices
    idx, d2 = nearest_vertices(alvo, pred)
    valor = 2.0 * float(d2.mean())
    grad = _acumular(idx, 4.0 * (v[idx] - alvo) / len(alvo), len(v))
    return LossValue(valor, grad, {"boundary": valor})


def inflation_loss(pred: TriMesh, input_surf: TriMesh, normals, epsilon: float) -> LossValue:
    """
    Perda de inflação: `1 - media_i cos(deslocamento_i, n_i)` com o cosseno
    regularizado por `epsilon`.

    Em deslocamento exatamente nulo o gradiente usa a forma fechada
    `-n_i / (epsilon N)`.
    """
    _mesma_contagem(pred, input_surf)
    normals = np.asarray(normals, dtype=np.float64)
    n = pred.n_vertices
    d = pred.vertices - input_surf.vertices
    r = np.linalg.norm(d, axis=1)
    projecao = np.einsum("ij,ij->i", d, normals)
    cosseno = projecao / (r + epsilon)
    valor = 1.0 - float(cosseno.mean())

    nulo = r == 0
    r_seguro = np.where(nulo, 1.0, r)
    dcos = normals / (r + epsilon)[:, None] - (projecao / (r_seguro * (r + epsilon) ** 2))[:, None] * d
    dcos[nulo] = normals[nulo] / epsilon
    grad = -dcos / n
    return LossValue(valor, grad, {"inflation": valor})


def inflation_grad_at_identity(input_surf: TriMesh, normals, epsilon: float) -> np.ndarray:
    """Gradiente da perda de inflação em `pred == input_surf`: `-n_i / (epsilon N)`."""
    normals = np.asarray(normals, dtype=np.float64)
    return -normals / (epsilon * input_surf.n_vertices)


def edge_loss(mesh: TriMesh) -> LossValue:
    """Média do quadrado do comprimento das arestas."""
    arestas = mesh.edges
    if len(arestas) == 0:
        raise EntradaDegeneradaError("malha sem arestas", code="no_edges")
    diferenca = mesh.vertices[arestas[:, 0]] - mesh.vertices[arestas[:, 1]]
    valor = float((diferenca**2).sum(axis=1).mean())
    parcela = 2.0 * diferenca / len(arestas)
    grad = _acumular(arestas[:, 0], parcela, mesh.n_vertices) - _acumular(
        arestas[:, 1], parcela, mesh.n_vertices
    )
    return LossValue(valor, grad, {"edge": valor})


def normal_consistency_loss(mesh: TriMesh) -> LossValue:
    """
    Média de `1 - cos` do ângulo entre as normais das duas faces de cada
    aresta interior. Arestas de borda são ignoradas.
    """
    _, pares = mesh.edge_faces
    if len(pares) == 0:
        return LossValue(0.0, np.zeros_like(mesh.vertices), {"normal_consistency": 0.0})

    tri = mesh.vertices[mesh.faces]
    bruta = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    norma = np.linalg.norm(bruta, axis=1)
    norma_segura = np.where(norma > 0, norma, 1.0)
    unit = bruta / norma_segura[:, None]

    f0, f1 = pares[:, 0], pares[:, 1]
    n_arestas = len(pares)
    valor = float((1.0 - np.einsum("ij,ij->i", unit[f0], unit[f1])).mean())

    g_unit = _acumular(f0, -unit[f1] / n_arestas, mesh.n_faces) + _acumular(
        f1, -unit[f0] / n_arestas, mesh.n_faces
    )
    g_bruta = (g_unit - unit * np.einsum("ij,ij->i", unit, g_unit)[:, None]) / norma_segura[:, None]
    g_bruta[norma == 0] = 0.0

    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    grad = _acumular(mesh.faces[:, 0], np.cross(g_bruta, c - b), mesh.n_vertices)
    grad += _acumular(mesh.faces[:, 1], np.cross(g_bruta, a - c), mesh.n_vertices)
    grad += _acumular(mesh.faces[:, 2], np.cross(g_bruta, b - a), mesh.n_vertices)
    return LossValue(valor, grad, {"normal_consistency": valor})


def mse_pretrain_loss(pred: TriMesh, inflated_target: TriMesh) -> LossValue:
    _mesma_contagem(pred, inflated_target)
    diferenca = pred.vertices - inflated_target.vertices
    valor = float((diferenca**2).sum(axis=1).mean())
    return LossValue(valor, 2.0 * diferenca / pred.n_vertices, {"mse_pretrain": valor})


def inflate_surface(input_surf: TriMesh, gamma: float, n_steps: int) -> TriMesh:
    """
    Superfície inflada: `n_steps` passos de `v <- v + gamma n(v)`, com as
    normais recalculadas a cada passo.
    """
    if n_steps < 0:
        raise ArgumentoError("n_steps deve ser >= 0")
    malha = input_surf
    for _ in range(n_steps):
        malha = malha.with_vertices(malha.vertices + gamma * vertex_normals(malha))
    return malha


def _combinar(partes: list[tuple[float, LossValue]]) -> LossValue:
    valor = 0.0
    grad = None
    termos = {}
    for peso, parte in partes:
        termos.update(parte.terms)
        if peso == 0:
            continue
        valor += peso * parte.value
        grad = peso * parte.grad if grad is None else grad + peso * parte.grad
    if grad is None:
        grad = np.zeros_like(partes[0][1].grad)
    termos["total"] = valor
    return LossValue(valor, grad, termos)


def _suavidade(pred: TriMesh, cfg: LossConfig) -> list[tuple[float, LossValue]]:
    return [(cfg.w_edge, edge_loss(pred)), (cfg.w_nc, normal_consistency_loss(pred))]


def loss_white(pred: TriMesh, target: TriMesh, cfg: LossConfig) -> LossValue:
    """`chamfer + w_edge * edge + w_nc * nc`."""
    return _combinar([(1.0, chamfer_bi(pred, target)), *_suavidade(pred, cfg)])


def is_pretrain(iteration, cfg: LossConfig) -> bool:
    return (
        cfg.pial_mode == "weak" and iteration is not None and iteration < cfg.pretrain_iters
    )


def loss_pial(
    pred: TriMesh,
    target_cgm_boundary: TriMesh,
    input_white: TriMesh,
    cfg: LossConfig,
    *,
    iteration: int | None = None,
    inflated: TriMesh | None = None,
    normals=None,
) -> LossValue:
    """
    Perda da superfície pial.

    Fora do pré-treino: `boundary + w_inflation * inflation + w_edge * edge
    + w_nc * nc`. Nas primeiras `pretrain_iters` iterações a parte fraca e
    trocada pelo MSE contra a superfície branca inflada. Com
    `pial_mode == "chamfer"` usa o Chamfer bidirecional sem pré-treino.

    :param iteration:
        Opcional. Iteração atual do ajuste; `None` avalia a fase principal.

    :param inflated, normals:
        Opcionais. Superfície inflada e normais de `input_white` já
        calculadas.
    """
    if cfg.pial_mode == "chamfer":
        return _combinar([(1.0, chamfer_bi(pred, target_cgm_boundary)), *_suavidade(pred, cfg)])

    if is_pretrain(iteration, cfg):
        if inflated is None:
            inflated = inflate_surface(input_white, cfg.gamma, cfg.n_inflate_steps)
        partes = [(1.0, mse_pretrain_loss(pred, inflated))]
        if cfg.smooth_in_pretrain:
            partes += _suavidade(pred, cfg)
        return _combinar(partes)

    if normals is None:
        normals = vertex_normals(input_white)
    return _combinar(
        [
            (1.0, boundary_loss(pred, target_cgm_boundary)),
            (cfg.w_inflation, inflation_loss(pred, input_white, normals, cfg.epsilon)),
            *_suavidade(pred, cfg),
        ]
    )
