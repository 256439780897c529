import logging

import numpy as np
import pymeshlab
import trimesh
from scipy.sparse import csr_matrix
from scipy.spatial import cKDTree
from skimage import measure

from core.volume import sample_trilinear
from helpers.erros import ArgumentoError, EntradaDegeneradaError
from helpers.settings import get_workers
from models import TriMesh, Volume3

logger = logging.getLogger(__name__)

_BLOCO = 4096


def compactar(vertices, faces) -> TriMesh:
    """
    Funde vértices de mesma posição, descarta faces degeneradas ou repetidas
    e remove vértices sem face.
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    unicos, inverso = np.unique(vertices, axis=0, return_inverse=True)
    faces = inverso.reshape(-1)[faces]
    validas = (faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 2] != faces[:, 0])
    faces = faces[validas]
    if len(faces):
        _, primeira = np.unique(np.sort(faces, axis=1), axis=0, return_index=True)
        faces = faces[np.sort(primeira)]
    return remover_nao_referenciados(TriMesh(unicos, faces))


def remover_nao_referenciados(mesh: TriMesh) -> TriMesh:
    usados = np.unique(mesh.faces.reshape(-1))
    if len(usados) == mesh.n_vertices:
        return mesh
    mapa = -np.ones(mesh.n_vertices, dtype=np.int64)
    mapa[usados] = np.arange(len(usados))
    return TriMesh(mesh.vertices[usados], mapa[mesh.faces])


def marching_cubes(sdf: Volume3, level: float, *, close_boundary: bool = False) -> TriMesh:
    """
    Extrai a isosuperfície `sdf == level` em coordenadas de mundo.

    As normais das faces apontam no sentido crescente do campo (para fora,
    num SDF).

    :param close_boundary:
        Envolve a grade com uma camada acima do nível, fechando superfícies
        que tocam a borda do volume.

    :raises EntradaDegeneradaError:
        Se o nível estiver fora do intervalo de valores do volume.
    """
    data = np.asarray(sdf.data, dtype=np.float64)
    if not (data.min() < level < data.max()):
        raise EntradaDegeneradaError(
            f"empty level set (nível {level} fora de [{data.min():.4g}, {data.max():.4g}])",
            code="empty_level_set",
        )

    origem = np.asarray(sdf.origin, dtype=np.float64)
    if close_boundary:
        data = np.pad(data, 1, mode="constant", constant_values=max(data.max(), level) + 1.0)
        origem = origem - np.asarray(sdf.spacing)

    verts, faces, _, _ = measure.marching_cubes(
        data, level=level, spacing=sdf.spacing, method="lewiner", allow_degenerate=False
    )
    malha = compactar(verts + origem, faces)
    if malha.n_faces == 0:
        raise EntradaDegeneradaError("empty level set", code="empty_level_set")

    campo = Volume3(data, sdf.spacing, tuple(origem))
    centros = malha.vertices[malha.faces].mean(axis=1)
    _, gradiente = sample_trilinear(campo, centros)
    alinhamento = np.einsum("ij,ij->i", malha.face_normals(unit=False), gradiente)
    if np.sum(alinhamento > 0) < np.sum(alinhamento < 0):
        malha = malha.flipped()

    logger.debug("marching cubes nivel=%s V=%d F=%d", level, malha.n_vertices, malha.n_faces)
    return malha


def _umbrella(mesh: TriMesh):
    n = mesh.n_vertices
    arestas = mesh.edges
    adjacencia = csr_matrix(
        (
            np.ones(2 * len(arestas)),
            (np.r_[arestas[:, 0], arestas[:, 1]], np.r_[arestas[:, 1], arestas[:, 0]]),
        ),
        shape=(n, n),
    )
    grau = np.asarray(adjacencia.sum(axis=1)).reshape(-1)
    grau[grau == 0] = 1.0
    return adjacencia, grau


def _passo_umbrella(pontos, adjacencia, grau, fator):
    media = adjacencia.dot(pontos) / grau[:, None]
    return pontos + fator * (media - pontos)


def laplacian_smooth(mesh: TriMesh, iterations: int, lam: float = 0.5) -> TriMesh:
    """Suavização laplaciana uniforme (umbrella); conectividade preservada."""
    if not 0 < lam <= 1:
        raise ArgumentoError(f"lambda deve estar em (0, 1], recebido {lam}")
    if iterations < 0:
        raise ArgumentoError("iterations deve ser >= 0")
    if iterations == 0:
        return mesh
    adjacencia, grau = _umbrella(mesh)
    pontos = mesh.vertices.copy()
    for _ in range(iterations):
        pontos = _passo_umbrella(pontos, adjacencia, grau, lam)
    return mesh.with_vertices(pontos)


def taubin_smooth(mesh: TriMesh, iterations: int, lam: float = 0.5, mu: float = -0.53) -> TriMesh:
    """
    Suavização de Taubin: cada iteração aplica um passo `lam` seguido de um
    passo `mu` do operador umbrella.

    :raises ArgumentoError:
        Se `lam <= 0`, `mu >= 0` ou `|mu| <= lam`.
    """
    if lam <= 0 or mu >= 0 or abs(mu) <= lam:
        raise ArgumentoError(f"parâmetros de Taubin inválidos: lambda={lam}, mu={mu}")
    if iterations < 0:
        raise ArgumentoError("iterations deve ser >= 0")
    if iterations == 0:
        return mesh
    adjacencia, grau = _umbrella(mesh)
    pontos = mesh.vertices.copy()
    for _ in range(iterations):
        pontos = _passo_umbrella(pontos, adjacencia, grau, lam)
        pontos = _passo_umbrella(pontos, adjacencia, grau, mu)
    return mesh.with_vertices(pontos)


def _comprimento_alvo(valor: float):
    if hasattr(pymeshlab, "PureValue"):
        return pymeshlab.PureValue(valor)
    return pymeshlab.AbsoluteValue(valor)


def isotropic_remesh(mesh: TriMesh, target_edge_mm: float, iterations: int = 10) -> TriMesh:
    """
    Remalhagem isotrópica explícita (split, collapse, flip e relaxamento
    tangencial) via PyMeshLab.
    """
    if target_edge_mm <= 0:
        raise ArgumentoError(f"comprimento alvo deve ser positivo, recebido {target_edge_mm}")
    ms = pymeshlab.MeshSet()
    ms.add_mesh(pymeshlab.Mesh(vertex_matrix=mesh.vertices, face_matrix=mesh.faces.astype(np.int32)))
    ms.apply_filter(
        "meshing_isotropic_explicit_remeshing",
        iterations=int(iterations),
        targetlen=_comprimento_alvo(float(target_edge_mm)),
    )
    ms.apply_filter("meshing_remove_unreferenced_vertices")
    atual = ms.current_mesh()
    saida = TriMesh(
        np.asarray(atual.vertex_matrix(), dtype=np.float64),
        np.asarray(atual.face_matrix(), dtype=np.int64),
    )
    logger.debug(
        "remesh alvo=%.4g V=%d->%d chi=%d",
        target_edge_mm,
        mesh.n_vertices,
        saida.n_vertices,
        saida.euler_characteristic,
    )
    return saida


def vertex_normals(mesh: TriMesh) -> np.ndarray:
    """
    Normais unitárias por vértice, média das normais das faces ponderada
    pela área.

    :raises EntradaDegeneradaError:
        Se algum vértice não pertencer a nenhuma face.
    """
    incidencia = np.bincount(mesh.faces.reshape(-1), minlength=mesh.n_vertices)
    if np.any(incidencia == 0):
        raise EntradaDegeneradaError(
            f"vertex with no incident face (índice {int(np.argmax(incidencia == 0))})",
            code="isolated_vertex",
        )
    cruz = mesh.face_normals(unit=False)
    soma = np.zeros_like(mesh.vertices)
    for k in range(3):
        np.add.at(soma, mesh.faces[:, k], cruz)
    norma = np.linalg.norm(soma, axis=1, keepdims=True)
    return soma / np.where(norma > 0, norma, 1.0)


def edge_lengths(mesh: TriMesh) -> np.ndarray:
    arestas = mesh.edges
    return np.linalg.norm(mesh.vertices[arestas[:, 0]] - mesh.vertices[arestas[:, 1]], axis=1)


class VertexIndex:
    """
    Busca exata do vértice mais próximo com desempate pelo menor índice.

    A árvore é construída uma vez e reutilizada para várias consultas.
    """

    def __init__(self, vertices):
        self.vertices = np.asarray(vertices, dtype=np.float64)
        if len(self.vertices) == 0:
            raise EntradaDegeneradaError("conjunto de vértices vazio", code="empty_vertex_set")
        self.tree = cKDTree(self.vertices)
        self.k = min(8, len(self.vertices))

    def query(self, pontos):
        pontos = np.atleast_2d(np.asarray(pontos, dtype=np.float64))
        _, candidatos = self.tree.query(pontos, k=self.k, workers=get_workers())
        candidatos = np.asarray(candidatos).reshape(len(pontos), self.k)
        d2 = ((self.vertices[candidatos] - pontos[:, None, :]) ** 2).sum(axis=2)
        menor = d2.min(axis=1)
        empatados = np.where(d2 == menor[:, None], candidatos, np.iinfo(np.int64).max)
        indices = empatados.min(axis=1)

        # todos os k candidatos empatados: pode haver empate fora da vizinhança
        cheios = np.flatnonzero(np.all(d2 == menor[:, None], axis=1)) if self.k < len(self.vertices) else []
        for q in cheios:
            raio = np.sqrt(menor[q]) * (1.0 + 1e-9) + 1e-12
            vizinhos = np.asarray(self.tree.query_ball_point(pontos[q], raio), dtype=np.int64)
            dv = ((self.vertices[vizinhos] - pontos[q]) ** 2).sum(axis=1)
            melhor = dv.min()
            indices[q] = vizinhos[dv == melhor].min()
            menor[q] = melhor
        return indices.astype(np.int64), menor


def nearest_vertices(pontos, mesh: TriMesh):
    """Versão vetorizada de `nearest_vertex`: `(índices, distâncias ao quadrado)`."""
    return VertexIndex(mesh.vertices).query(pontos)


def nearest_vertex(query, mesh: TriMesh) -> tuple[int, float]:
    indices, d2 = nearest_vertices(np.asarray(query, dtype=np.float64).reshape(1, 3), mesh)
    return int(indices[0]), float(d2[0])


def point_surface_distance(pontos, mesh: TriMesh):
    """
    Distância exata ponto-triângulo de cada ponto até a superfície.

    Retorna `(distâncias, pontos mais próximos, índice da face)`. Empates
    ficam com a face de menor índice.
    """
    pontos = np.atleast_2d(np.asarray(pontos, dtype=np.float64))
    if mesh.n_faces == 0:
        raise EntradaDegeneradaError("malha sem faces", code="degenerate_mesh")

    triangulos = mesh.vertices[mesh.faces]
    centros = triangulos.mean(axis=1)
    raios = np.linalg.norm(triangulos - centros[:, None, :], axis=2).max(axis=1)
    raio_max = float(raios.max())
    arvore_centros = cKDTree(centros)
    arvore_vertices = cKDTree(mesh.vertices[np.unique(mesh.faces)])

    distancias = np.empty(len(pontos))
    mais_proximos = np.empty((len(pontos), 3))
    faces = np.empty(len(pontos), dtype=np.int64)
    for inicio in range(0, len(pontos), _BLOCO):
        bloco = pontos[inicio : inicio + _BLOCO]
        dv, _ = arvore_vertices.query(bloco, workers=get_workers())
        candidatos = arvore_centros.query_ball_point(
            bloco, dv * (1.0 + 1e-9) + raio_max + 1e-9, workers=get_workers()
        )
        tamanhos = np.fromiter((len(c) for c in candidatos), dtype=np.int64, count=len(bloco))
        qual = np.repeat(np.arange(len(bloco)), tamanhos)
        face = np.concatenate([np.asarray(c, dtype=np.int64) for c in candidatos])

        perto = trimesh.triangles.closest_point(triangulos[face], bloco[qual])
        d = np.linalg.norm(perto - bloco[qual], axis=1)
        ordem = np.lexsort((face, d, qual))
        primeiro = ordem[np.r_[0, np.flatnonzero(np.diff(qual[ordem])) + 1]]

        distancias[inicio : inicio + len(bloco)] = d[primeiro]
        mais_proximos[inicio : inicio + len(bloco)] = perto[primeiro]
        faces[inicio : inicio + len(bloco)] = face[primeiro]
    return distancias, mais_proximos, faces


def _segmento_cruza_triangulo(p0, p1, a, b, c):
    """Moller-Trumbore em segmentos, intervalos fechados; casos coplanares retornam False."""
    direcao = p1 - p0
    e1 = b - a
    e2 = c - a
    h = np.cross(direcao, e2)
    det = np.einsum("ij,ij->i", e1, h)
    escala = (
        np.linalg.norm(direcao, axis=1) * np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1)
    )
    valido = np.abs(det) > 1e-14 * escala
    det = np.where(valido, det, 1.0)
    s = p0 - a
    u = np.einsum("ij,ij->i", s, h) / det
    q = np.cross(s, e1)
    v = np.einsum("ij,ij->i", direcao, q) / det
    t = np.einsum("ij,ij->i", e2, q) / det
    return valido & (u >= 0) & (v >= 0) & (u + v <= 1) & (t >= 0) & (t <= 1)


def triangles_intersect(tri_a: np.ndarray, tri_b: np.ndarray) -> np.ndarray:
    """
    Teste triângulo-triângulo em lote: alguma aresta de um atravessa o outro.

    :param tri_a, tri_b:
        Arrays `(m, 3, 3)` com os pares a testar.
    """
    cruza = np.zeros(len(tri_a), dtype=bool)
    for primeiro, segundo in ((tri_a, tri_b), (tri_b, tri_a)):
        for i in range(3):
            cruza |= _segmento_cruza_triangulo(
                primeiro[:, i], primeiro[:, (i + 1) % 3], segundo[:, 0], segundo[:, 1], segundo[:, 2]
            )
    return cruza


def self_intersecting_faces(mesh: TriMesh) -> np.ndarray:
    """
    Máscara das faces que cruzam alguma face não adjacente.

    Faces que compartilham vértice ou aresta não são testadas entre si.
    Sobreposições coplanares não são detectadas.
    """
    marcadas = np.zeros(mesh.n_faces, dtype=bool)
    if mesh.n_faces < 2:
        return marcadas

    triangulos = mesh.vertices[mesh.faces]
    centros = triangulos.mean(axis=1)
    raios = np.linalg.norm(triangulos - centros[:, None, :], axis=2).max(axis=1)
    pares = cKDTree(centros).query_pairs(r=2.0 * float(raios.max()) + 1e-12, output_type="ndarray")
    if len(pares) == 0:
        return marcadas
    pares = pares[np.lexsort((pares[:, 1], pares[:, 0]))]

    fa, fb = pares[:, 0], pares[:, 1]
    perto = np.linalg.norm(centros[fa] - centros[fb], axis=1) <= raios[fa] + raios[fb] + 1e-12
    compartilham = (mesh.faces[fa][:, :, None] == mesh.faces[fb][:, None, :]).any(axis=(1, 2))
    minimo_a, maximo_a = triangulos[fa].min(axis=1), triangulos[fa].max(axis=1)
    minimo_b, maximo_b = triangulos[fb].min(axis=1), triangulos[fb].max(axis=1)
    caixas = np.all((minimo_a <= maximo_b) & (minimo_b <= maximo_a), axis=1)
    pares = pares[perto & ~compartilham & caixas]

    for inicio in range(0, len(pares), _BLOCO):
        bloco = pares[inicio : inicio + _BLOCO]
        cruza = triangles_intersect(triangulos[bloco[:, 0]], triangulos[bloco[:, 1]])
        marcadas[bloco[cruza, 0]] = True
        marcadas[bloco[cruza, 1]] = True
    return marcadas


def count_self_intersections(mesh: TriMesh) -> int:
    """Número de faces envolvidas em pelo menos uma auto-interseção."""
    return int(self_intersecting_faces(mesh).sum())
