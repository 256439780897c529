import logging
from pathlib import Path
from typing import Optional

import typer

from core.benchmark import run_pial_ablation
from helpers.cli import ecoar_config, executar, preparar

logger = logging.getLogger(__name__)


@executar
def cmd_benchmark(
    out: Path = typer.Option(Path("benchmark.json"), "--out", help="Relatório JSON."),
    config: Optional[Path] = typer.Option(None, "--config"),
    grid_dims: Optional[str] = typer.Option(None, "--grid-dims"),
    spacing: Optional[float] = typer.Option(None, "--spacing"),
    r0: Optional[float] = typer.Option(None, "--r0"),
    fold_amp: Optional[float] = typer.Option(None, "--fold-amp"),
    fold_freq: Optional[int] = typer.Option(None, "--fold-freq"),
    thickness: Optional[float] = typer.Option(None, "--thickness"),
    pve_close_radius: Optional[int] = typer.Option(None, "--pve-close-radius"),
    subdivisions: Optional[int] = typer.Option(None, "--subdivisions"),
    iters: Optional[int] = typer.Option(None, "--iters"),
    lr: Optional[float] = typer.Option(None, "--lr"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    w_inflations: Optional[str] = typer.Option(None, "--w-inflations", help="Ex.: 0,2,5,10."),
    include_chamfer: bool = typer.Option(True, "--include-chamfer/--no-chamfer"),
    samples: Optional[int] = typer.Option(None, "--samples"),
    threads: Optional[int] = typer.Option(None, "--threads"),
    log_level: Optional[str] = typer.Option(None, "--log-level"),
):
    """
    Ablação do estágio pial no fantoma: perda fraca para cada peso de
    inflação contra o Chamfer bidirecional.
    """
    run = preparar(
        config,
        log_level,
        grid_dims=grid_dims,
        spacing=spacing,
        r0=r0,
        fold_amp=fold_amp,
        fold_freq=fold_freq,
        thickness=thickness,
        pve_close_radius=pve_close_radius,
        subdivisions=subdivisions,
        iters=iters,
        lr=lr,
        seed=seed,
        w_inflations=w_inflations,
        samples=samples,
        threads=threads,
        stage="pial",
    )
    relatorio = run_pial_ablation(
        run.phantom_spec(),
        run.fit_config(),
        run.w_inflations,
        include_chamfer,
        n_samples=run.samples,
        sulc_smooth_iters=run.sulc_smooth_iters,
    )
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(relatorio.model_dump_json(indent=2) + "\n", encoding="utf-8")
    ecoar_config(run, out)
    logger.info("benchmark gravado em %s (melhor ASSD: %s)", out, relatorio.best_assd)
