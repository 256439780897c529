from pathlib import Path

from pydantic import BaseModel, ValidationError

from helpers.erros import ArgumentoError, ArquivoError
from helpers.validacao import campos_desconhecidos


def ler_arquivo_config(path) -> dict[str, str]:
    """
    Lê um arquivo de configuração `chave = valor` (UTF-8, uma entrada por linha).

    Linhas vazias e comentários iniciados por `#` são ignorados. Chaves
    repetidas valem pela última ocorrência.

    :param path:
        Caminho do arquivo.

    :return:
        Dicionário com os valores ainda como texto.

    :raises ArquivoError:
        Se o arquivo não existir.

    :raises ArgumentoError:
        Se alguma linha não seguir o formato `chave = valor`.
    """
    path = Path(path)
    if not path.is_file():
        raise ArquivoError(f"arquivo de configuração não encontrado: {path}", code="missing_file")

    valores = {}
    for numero, linha in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        linha = linha.split("#", 1)[0].strip()
        if not linha:
            continue
        if "=" not in linha:
            raise ArgumentoError(f"{path}:{numero}: esperado 'chave = valor'")
        chave, valor = linha.split("=", 1)
        chave = chave.strip().replace("-", "_")
        if not chave:
            raise ArgumentoError(f"{path}:{numero}: chave vazia")
        valores[chave] = valor.strip()
    return valores


def resolver_config(modelo: type[BaseModel], *, arquivo=None, overrides: dict | None = None):
    """
    Monta a configuração final: padrões do modelo < arquivo < flags.

    Flags com valor `None` não sobrescrevem nada.

    :raises ArgumentoError:
        Para chaves desconhecidas ou valores inválidos.
    """
    por_nome = {nome.lower(): nome for nome in modelo.model_fields}
    body = {}
    if arquivo is not None:
        for chave, valor in ler_arquivo_config(arquivo).items():
            body[por_nome.get(chave.lower(), chave)] = valor
    for chave, valor in (overrides or {}).items():
        if valor is not None:
            body[por_nome.get(chave.lower(), chave)] = valor

    extras = campos_desconhecidos(conhecidos=modelo.model_fields, body=body)
    if extras:
        raise ArgumentoError(f"chaves desconhecidas na configuração: {', '.join(extras)}")

    try:
        return modelo.model_validate(body)
    except ValidationError as exc:
        raise ArgumentoError(f"configuração inválida: {exc.errors(include_url=False)}") from exc


def escrever_config(config: BaseModel, path):
    """Grava a configuração resolvida em `chave = valor`, chaves ordenadas."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dados = config.model_dump(mode="json")
    linhas = []
    for chave in sorted(dados):
        valor = dados[chave]
        if isinstance(valor, list):
            valor = ",".join(str(v) for v in valor)
        linhas.append(f"{chave} = {valor}")
    path.write_text("\n".join(linhas) + "\n", encoding="utf-8")
    return path


def caminho_config(saida) -> Path:
    """Arquivo de eco da configuração ao lado de uma saída."""
    saida = Path(saida)
    nome = saida.name.split(".")[0] or saida.name
    return saida.with_name(f"{nome}.config.txt")
