class ConfigError(ValueError):
    """Invalid configuration value or incompatible budget."""


class DomainError(ValueError):
    """Argument outside the domain where a quantity is defined."""


class IntegrationError(RuntimeError):
    def __init__(self, step: int, msg: str = "non-finite state"):
        super().__init__(f"{msg} at step {step}")
        self.step = step


class TrainingError(RuntimeError):
    pass
