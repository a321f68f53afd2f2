class HireError(Exception):
    """Base error. `exit_code` is what the CLI returns when it escapes a command."""

    exit_code = 1


class ShapeError(HireError):
    pass


class DomainError(HireError):
    pass


class DegenerateInputError(HireError):
    exit_code = 2


class ContractError(HireError):
    pass


class InputError(HireError):
    exit_code = 2


class ConfigError(InputError):
    pass


class ValidationError(InputError):
    pass


class ParseError(InputError):
    pass


class CompatibilityError(HireError):
    exit_code = 3


class SchemaMismatchError(CompatibilityError):
    pass
