import logging
from logging.config import fileConfig
from pathlib import Path

from helpers.settings import LOG_LEVEL, LOGGING_INI


def configurar_logging(level: str | None = None, ini_path: str | None = None):
    """
    Configura o logging do processo a partir do arquivo ini.

    :param level:
        Opcional. Nível aplicado ao logger `coseg` e aos pacotes do projeto.
        Usa `COSEG_LOG_LEVEL` quando omitido.

    :param ini_path:
        Opcional. Caminho alternativo para o ini de logging.
    """
    path = Path(ini_path or LOGGING_INI)
    if path.is_file():
        fileConfig(path, disable_existing_loggers=False)
    else:
        logging.basicConfig(
            format="%(asctime)s %(levelname)-5.5s [%(name)s] %(message)s"
        )

    nivel = (level or LOG_LEVEL).upper()
    for nome in ("coseg", "core", "apps", "helpers"):
        logging.getLogger(nome).setLevel(nivel)


def kv(**campos) -> str:
    """Formata pares chave=valor para as linhas estruturadas de log."""
    partes = []
    for chave, valor in campos.items():
        if isinstance(valor, float):
            valor = f"{valor:.6g}"
        partes.append(f"{chave}={valor}")
    return " ".join(partes)
