import logging
from pathlib import Path
from typing import Optional

import typer

from core.fileio import write_mesh, write_volume
from core.phantom import generate
from helpers.cli import ecoar_config, executar, preparar
from helpers.erros import ArgumentoError

logger = logging.getLogger(__name__)


@executar
def cmd_phantom(
    out_dir: Path = typer.Option(Path("phantom"), "--out-dir", help="Diretório de saída."),
    config: Optional[Path] = typer.Option(None, "--config", help="Arquivo chave = valor."),
    grid_dims: Optional[str] = typer.Option(None, "--grid-dims", help="Ex.: 128 ou 96,96,96."),
    spacing: Optional[float] = typer.Option(None, "--spacing"),
    r0: Optional[float] = typer.Option(None, "--r0"),
    fold_amp: Optional[float] = typer.Option(None, "--fold-amp"),
    fold_freq: Optional[int] = typer.Option(None, "--fold-freq"),
    thickness: Optional[float] = typer.Option(None, "--thickness"),
    pve_close_radius: Optional[int] = typer.Option(None, "--pve-close-radius"),
    subdivisions: Optional[int] = typer.Option(None, "--subdivisions"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    volume_format: str = typer.Option("nii", "--format", help="nii ou raw."),
    threads: Optional[int] = typer.Option(None, "--threads"),
    log_level: Optional[str] = typer.Option(None, "--log-level"),
):
    """
    Gera o fantoma de esfera dobrada.

    Grava os rótulos `wm`, `cgm` e `cgm_pve`, as malhas `white_gt.ply` e
    `pial_gt.ply` e o eco da configuração em `phantom.config.txt`.
    """
    if volume_format not in ("nii", "raw"):
        raise ArgumentoError(f"--format deve ser nii ou raw, recebido {volume_format}")
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
        seed=seed,
        threads=threads,
    )
    fantoma = generate(run.phantom_spec())

    out_dir.mkdir(parents=True, exist_ok=True)
    write_volume(fantoma.wm_label, out_dir / f"wm.{volume_format}")
    write_volume(fantoma.cgm_label, out_dir / f"cgm.{volume_format}")
    write_volume(fantoma.cgm_label_pve, out_dir / f"cgm_pve.{volume_format}")
    write_mesh(fantoma.white_gt, out_dir / "white_gt.ply")
    write_mesh(fantoma.pial_gt, out_dir / "pial_gt.ply")
    ecoar_config(run, out_dir / "phantom")
    logger.info("fantoma gravado em %s", out_dir)
