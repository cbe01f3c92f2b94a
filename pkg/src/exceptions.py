"""Custom exceptions for the NetForge simulator"""


class NetForgeException(Exception):
    """Base exception for the simulator"""
    pass


class ScenarioError(NetForgeException):
    """Raised when a scenario or topology fails validation"""
    pass


class ActionSpaceError(NetForgeException):
    """Raised when an action pair lies outside MultiDiscrete([32, 100])"""
    pass


class QueueIdleError(NetForgeException):
    """Raised when time is advanced on an empty event queue"""
    pass


class EncoderError(NetForgeException):
    """Raised when the log encoder cannot be fitted, loaded or applied"""
    pass


class KernelError(NetForgeException):
    """Raised on shape mismatches or non-finite inputs to policy kernels"""
    pass


class WeightsError(NetForgeException):
    """Raised when a weights archive is malformed or incomplete"""
    pass


class PolicyError(NetForgeException):
    """Raised for unknown policies or failures inside a policy"""
    pass


class HypervisorError(NetForgeException):
    """Base class for dispatcher failures"""
    pass


class TranscriptDivergenceError(HypervisorError):
    """Raised when a replayed action does not match the transcript cursor"""

    def __init__(self, message: str, cursor: int):
        super().__init__(message)
        self.cursor = cursor


class TranscriptExhaustedError(HypervisorError):
    """Raised when the transcript has no records left"""
    pass


class RealExecutorNotImplemented(HypervisorError):
    """Raised by the live executor contract; carries the command that would run"""

    def __init__(self, descriptor: dict):
        super().__init__(
            f"Live execution is not available; would run {descriptor.get('script')} "
            f"against {descriptor.get('target_address')}"
        )
        self.descriptor = descriptor


class HarnessError(NetForgeException):
    """Raised for invalid harness requests such as a non-positive benchmark duration"""
    pass
