import logging
from pathlib import Path
from typing import Optional

import typer

from core.fileio import read_mesh, read_volume, save_model, write_mesh
from core.fit import (
    extract_outer_boundary,
    extract_pial_target,
    extract_target_boundary,
    fit_pial,
    fit_white,
)
from helpers.cli import ecoar_config, executar, preparar
from helpers.erros import AjusteDivergiuError, ArgumentoError

logger = logging.getLogger(__name__)


def _gravar_relatorio(report, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.to_json() + "\n", encoding="utf-8")
    logger.info("relatório gravado em %s (tempos: %s)", path, report.timings)


@executar
def cmd_fit(
    stage: Optional[str] = typer.Option(None, "--stage", help="white ou pial."),
    seg: Path = typer.Option(..., "--seg", help="Segmentação alvo (WM no estágio white, cGM no pial)."),
    init: Optional[Path] = typer.Option(None, "--init", help="Malha inicial (estágio white)."),
    white_mesh: Optional[Path] = typer.Option(
        None, "--white-mesh", help="Superfície branca prevista (entrada do estágio pial)."
    ),
    wm_seg: Optional[Path] = typer.Option(
        None, "--wm-seg", help="Segmentação WM; o alvo pial vira a fronteira de WM + cGM."
    ),
    out_mesh: Path = typer.Option(..., "--out-mesh"),
    out_model: Path = typer.Option(..., "--out-model"),
    out_report: Path = typer.Option(..., "--out-report"),
    config: Optional[Path] = typer.Option(None, "--config"),
    iters: Optional[int] = typer.Option(None, "--iters"),
    lr: Optional[float] = typer.Option(None, "--lr"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    w_edge: Optional[float] = typer.Option(None, "--w-edge"),
    w_nc: Optional[float] = typer.Option(None, "--w-nc"),
    w_inflation: Optional[float] = typer.Option(None, "--w-inflation"),
    pretrain_iters: Optional[int] = typer.Option(None, "--pretrain-iters"),
    pial_mode: Optional[str] = typer.Option(None, "--pial-mode", help="weak ou chamfer."),
    K: Optional[int] = typer.Option(None, "--steps", help="Número de passos de Euler."),
    taubin_iters: Optional[int] = typer.Option(None, "--taubin-iters"),
    threads: Optional[int] = typer.Option(None, "--threads"),
    log_level: Optional[str] = typer.Option(None, "--log-level"),
):
    """
    Ajusta a deformação de um estágio (white ou pial).

    Grava a malha deformada, o checkpoint do modelo, o relatório JSON e o
    eco da configuração. Em divergência o relatório parcial também é gravado
    e o código de saída é 4.
    """
    run = preparar(
        config,
        log_level,
        stage=stage,
        iters=iters,
        lr=lr,
        seed=seed,
        w_edge=w_edge,
        w_nc=w_nc,
        w_inflation=w_inflation,
        pretrain_iters=pretrain_iters,
        pial_mode=pial_mode,
        K=K,
        taubin_iters=taubin_iters,
        threads=threads,
    )
    cfg = run.fit_config()
    alvo_seg = read_volume(seg)

    if cfg.stage == "white":
        if init is None:
            raise ArgumentoError("--init é obrigatório no estágio white")
        entrada = read_mesh(init)
        alvo = extract_target_boundary(alvo_seg, run.taubin_iters)
        ajustar = fit_white
    else:
        origem = white_mesh or init
        if origem is None:
            raise ArgumentoError("--white-mesh é obrigatório no estágio pial")
        entrada = read_mesh(origem)
        if wm_seg is not None:
            alvo = extract_pial_target(read_volume(wm_seg), alvo_seg, run.taubin_iters)
        else:
            alvo = extract_outer_boundary(alvo_seg, run.taubin_iters)
        ajustar = fit_pial

    ecoar_config(run, out_mesh)
    try:
        model, malha, report = ajustar(entrada, alvo, cfg)
    except AjusteDivergiuError as exc:
        if exc.report is not None:
            _gravar_relatorio(exc.report, out_report)
        raise

    write_mesh(malha, out_mesh)
    save_model(model, out_model)
    _gravar_relatorio(report, out_report)
