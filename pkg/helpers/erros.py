class CosegError(Exception):
    """
    Erro base do projeto.

    A mensagem fica em `detail` e `exit_code` é o código de saída da
    linha de comando.

    :param detail:
        Mensagem legível do erro.

    :param code:
        Opcional. Código curto e estável para o tipo de falha.
    """

    exit_code = 1

    def __init__(self, detail: str, *, code: str | None = None):
        super().__init__(detail)
        self.detail = detail
        self.code = code

    def __str__(self):
        if self.code:
            return f"{self.detail} [{self.code}]"
        return self.detail


class ArquivoError(CosegError):
    exit_code = 1


class ArgumentoError(CosegError):
    exit_code = 2


class EntradaDegeneradaError(CosegError):
    exit_code = 3


class NumericoError(CosegError):
    exit_code = 4


class AjusteDivergiuError(NumericoError):
    """Fluxo divergente durante o ajuste; `report` traz o histórico até a falha."""

    def __init__(self, detail: str, *, report=None, code: str | None = None):
        super().__init__(detail, code=code)
        self.report = report


class ContratoError(CosegError):
    exit_code = 5
