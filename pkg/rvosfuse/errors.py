""" Module containing the exception types raised by rvosfuse """


class MalformedRleError(ValueError):
    """Raised when run-length counts violate the RLE invariants"""


class DimensionMismatchError(ValueError):
    """Raised when masks, sequences or tensors have incompatible shapes"""


class ConfigError(ValueError):
    """Raised for invalid configuration keys or values"""


class NumericError(ArithmeticError):
    """
    Raised when a neural kernel sublayer produces non-finite values

    Attributes:
        sublayer (str): Name of the sublayer that produced the values
    """
    def __init__(self, sublayer: str, message: str | None = None):
        self.sublayer = sublayer
        if message is None:
            message = f"Non-finite values after sublayer '{sublayer}'"
        super().__init__(message)


class MaskFileError(ValueError):
    """
    Raised when a mask (or tensor) file cannot be loaded

    Attributes:
        path (str): File that failed to load
        object_id (str | None): Object inside the file, if known
        reason (str): Human readable cause
    """
    def __init__(self, path, reason: str, object_id: str | None = None):
        self.path = str(path)
        self.object_id = object_id
        self.reason = reason
        location = f"{self.path}"
        if object_id is not None:
            location += f" (object '{object_id}')"
        super().__init__(f"{location}: {reason}")


class MissingObjectsError(KeyError):
    """
    Raised when predictions and ground truth do not cover the same objects

    Attributes:
        missing (list): Sorted ids present in the ground truth only
        path (str | None): Prediction source the ids are missing from
    """
    def __init__(self, missing: list, path=None):
        self.missing = sorted(missing)
        self.path = None if path is None else str(path)
        super().__init__(str(self))

    def __str__(self) -> str:
        where = "" if self.path is None else f" in {self.path}"
        return f"Missing prediction objects{where}: {', '.join(self.missing)}"
