"""Exception types.  ``exit_code`` is what the CLI returns for each family."""


class RedactError(Exception):
    exit_code = 1


class ParseError(RedactError):
    exit_code = 2

    def __init__(self, msg: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


class NetlistFormatError(ParseError):
    pass


class CycleError(RedactError):
    pass


class OscillationError(RedactError):
    pass


class FabricError(RedactError):
    pass


class LengthMismatch(FabricError):
    pass


class FingerprintMismatch(FabricError):
    pass


class CapacityExceeded(RedactError):
    exit_code = 3

    def __init__(self, resource: str, need: int, have: int):
        self.resource = resource
        self.need = need
        self.have = have
        super().__init__(f"{resource} capacity exceeded: need {need}, have {have}")


class GiveUp(RedactError):
    exit_code = 3


class Unroutable(RedactError):
    exit_code = 4

    def __init__(self, msg: str, congestion: dict | None = None):
        self.congestion = congestion or {}
        super().__init__(msg)


class BrokenChain(RedactError):
    pass


class AttackTimeout(RedactError):
    exit_code = 5


class OracleUnstable(RedactError):
    pass


class SolverMissing(RedactError):
    exit_code = 6


class SolverOutputError(ParseError):
    pass
