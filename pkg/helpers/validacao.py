def verificar_campos_obrigatorios(*, obrigatorios: list, body: dict) -> bool:
    """Falso se algum campo obrigatório faltar ou vier vazio; zero conta como presente."""
    for obrigatorio in obrigatorios:
        valor = body.get(obrigatorio.lower(), None)
        if valor is None or valor == "":
            return False
    return True


def campos_desconhecidos(*, conhecidos, body: dict) -> list[str]:
    """Chaves de `body` que não pertencem a `conhecidos`, em ordem alfabética."""
    conhecidos = set(conhecidos)
    return sorted(chave for chave in body if chave not in conhecidos)
