"""Exception hierarchy.

Every error carries a stable ``code`` string (the class name) and an exit
status used by the CLI: 2 for usage/configuration problems, 3 for runtime
violations of the execution model.
"""


class MembanditError(Exception):
    exit_status = 3

    @property
    def code(self):
        return type(self).__name__

    def record(self):
        return {"error": self.code, "exit_status": self.exit_status, "message": str(self)}


class ConfigError(MembanditError):
    exit_status = 2


class DomainError(ConfigError, ValueError):
    pass


class InvalidHardFamily(ConfigError, ValueError):
    pass


class InvalidPerturbation(ConfigError, ValueError):
    pass


class HorizonTooSmall(ConfigError, ValueError):
    pass


class BlockSizeInvalid(ConfigError, ValueError):
    pass


class RegimeInvalid(ConfigError, ValueError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

    def record(self):
        rec = super().record()
        rec["diagnostics"] = self.diagnostics
        return rec


class EnumerationTooLarge(ConfigError, ValueError):
    pass


class InvalidConfig(ConfigError, ValueError):
    pass


class SchemaMismatch(ConfigError, ValueError):
    pass


class InfiniteDivergence(MembanditError, ValueError):
    pass


class BudgetExceeded(MembanditError):
    def __init__(self, round_index, bits, budget):
        super().__init__(f"state uses {bits} bits > budget {budget} at round {round_index}")
        self.round_index = round_index
        self.bits = bits
        self.budget = budget


class CommitmentViolation(MembanditError):
    def __init__(self, message, batch=None, round_index=None):
        super().__init__(message)
        self.batch = batch
        self.round_index = round_index


class GridError(MembanditError):
    pass


class ReplayMismatch(MembanditError):
    def __init__(self, message, batch=None):
        super().__init__(message)
        self.batch = batch


class RegimeWarning(UserWarning):
    pass
