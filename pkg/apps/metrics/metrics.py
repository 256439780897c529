import logging
from pathlib import Path
from typing import Optional

import typer

from core.fileio import read_mesh
from core.metrics import evaluate
from helpers.cli import ecoar_config, executar, preparar
from helpers.erros import ArgumentoError
from schemas import SurfacePairMetrics

logger = logging.getLogger(__name__)


@executar
def cmd_metrics(
    pred: Path = typer.Option(..., "--pred", help="Superfície prevista."),
    ref: Path = typer.Option(..., "--ref", help="Superfície de referência."),
    white: Optional[Path] = typer.Option(
        None, "--white", help="Branca prevista; --pred/--ref passam a ser piais."
    ),
    ref_white: Optional[Path] = typer.Option(
        None, "--ref-white", help="Branca de referência (padrão: --white)."
    ),
    pial: Optional[Path] = typer.Option(
        None, "--pial", help="Pial prevista; --pred/--ref passam a ser brancas."
    ),
    ref_pial: Optional[Path] = typer.Option(None, "--ref-pial", help="Pial de referência."),
    samples: Optional[int] = typer.Option(None, "--samples"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    out: Optional[Path] = typer.Option(None, "--out", help="JSON de saída (padrão: stdout)."),
    config: Optional[Path] = typer.Option(None, "--config"),
    threads: Optional[int] = typer.Option(None, "--threads"),
    log_level: Optional[str] = typer.Option(None, "--log-level"),
):
    """
    Calcula ASSD, HD90 e auto-interseções de --pred contra --ref.

    Com --white as duas são piais e entram os erros de espessura e
    profundidade sulcal. Com --pial/--ref-pial as duas são brancas e a saída
    traz um bloco `white` e um bloco `pial`, este com a morfologia.
    """
    run = preparar(config, log_level, samples=samples, seed=seed, threads=threads)
    if (pial is None) != (ref_pial is None):
        raise ArgumentoError("--pial e --ref-pial devem ser usados juntos")
    if pial is not None and (white is not None or ref_white is not None):
        raise ArgumentoError("--pial não combina com --white/--ref-white")

    medir = dict(n_samples=run.samples, seed=run.seed, smooth_iters=run.sulc_smooth_iters)
    malha_pred, malha_ref = read_mesh(pred), read_mesh(ref)
    if pial is not None:
        resultado = SurfacePairMetrics(
            white=evaluate(malha_pred, malha_ref, **medir),
            pial=evaluate(
                read_mesh(pial), read_mesh(ref_pial), white_pred=malha_pred, white_ref=malha_ref, **medir
            ),
        )
    else:
        resultado = evaluate(
            malha_pred,
            malha_ref,
            white_pred=read_mesh(white) if white is not None else None,
            white_ref=read_mesh(ref_white) if ref_white is not None else None,
            **medir,
        )

    texto = resultado.model_dump_json(indent=2)
    if out is None:
        typer.echo(texto)
        return
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(texto + "\n", encoding="utf-8")
    ecoar_config(run, out)
    logger.info("métricas gravadas em %s", out)
