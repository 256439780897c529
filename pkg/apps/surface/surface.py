import logging
from pathlib import Path
from typing import Optional

import typer

from core.fileio import read_volume, write_mesh
from core.fit import build_initial_surface
from helpers.cli import ecoar_config, executar, preparar

logger = logging.getLogger(__name__)


@executar
def cmd_init_surface(
    seg: Path = typer.Option(..., "--seg", help="Template de substância branca (binário)."),
    out: Path = typer.Option(..., "--out", help="Malha de saída (.ply ou .obj)."),
    sigma: Optional[float] = typer.Option(None, "--sigma", help="Desvio da gaussiana em mm (6.0)."),
    level: Optional[float] = typer.Option(None, "--level", help="Nível do marching cubes (1.5)."),
    target_verts: Optional[int] = typer.Option(None, "--target-verts"),
    config: Optional[Path] = typer.Option(None, "--config"),
    threads: Optional[int] = typer.Option(None, "--threads"),
    log_level: Optional[str] = typer.Option(None, "--log-level"),
):
    """Gera a superfície inicial genus 0 a partir de um template de WM."""
    run = preparar(
        config,
        log_level,
        sigma=sigma,
        level=level,
        target_verts=target_verts,
        threads=threads,
    )
    template = read_volume(seg)
    malha = build_initial_surface(template, run.sigma, run.level, run.target_verts)
    write_mesh(malha, out)
    ecoar_config(run, out)
    logger.info("superfície inicial gravada em %s (V=%d)", out, malha.n_vertices)
