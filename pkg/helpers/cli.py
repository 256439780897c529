import functools
import logging
from pathlib import Path

import typer

from helpers.config import caminho_config, escrever_config, resolver_config
from helpers.erros import CosegError
from helpers.logs import configurar_logging
from helpers.settings import set_workers
from schemas import RunConfig

logger = logging.getLogger("coseg.cli")


def executar(comando):
    """
    Converte os erros do projeto em códigos de saída da linha de comando.

    O `detail` do erro vai para o log em nível ERROR.
    """

    @functools.wraps(comando)
    def envolvido(*args, **kwargs):
        try:
            return comando(*args, **kwargs)
        except CosegError as exc:
            logger.error("%s", exc)
            raise typer.Exit(code=exc.exit_code) from exc

    return envolvido


def preparar(config: Path | None, log_level: str | None, **overrides) -> RunConfig:
    """
    Configura o logging, resolve a `RunConfig` (padrões < arquivo < flags) e
    aplica o limite de threads.
    """
    configurar_logging(log_level)
    run = resolver_config(RunConfig, arquivo=config, overrides=overrides)
    set_workers(run.threads)
    return run


def ecoar_config(run: RunConfig, saida) -> Path:
    """Grava `<saída>.config.txt` ao lado da saída principal."""
    destino = escrever_config(run, caminho_config(saida))
    logger.info("configuração gravada em %s", destino)
    return destino
