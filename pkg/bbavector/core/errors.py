from typing import Optional


class BBAVectorError(Exception):
    """Base class for every error raised by the toolkit"""
    exit_code = 1


class DegenerateBox(BBAVectorError):
    pass


class InvalidOverlap(BBAVectorError):
    pass


class OutOfBounds(BBAVectorError):
    pass


class NoPositives(BBAVectorError):
    pass


class EmptyGroundTruth(BBAVectorError):
    pass


class PlacementFailure(BBAVectorError):
    pass


class ShapeMismatch(BBAVectorError):
    exit_code = 4


class EmptyInput(BBAVectorError):
    exit_code = 5


class ParseError(BBAVectorError):
    exit_code = 3

    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None):
        self.line = line
        self.path = path
        location = ""
        if path is not None:
            location += f"{path}:"
        if line is not None:
            location += f"{line}:"
        super().__init__(f"{location} {message}".strip() if location else message)


class UnknownCategory(ParseError):
    def __init__(self, category: str, line: Optional[int] = None, path: Optional[str] = None):
        self.category = category
        super().__init__(f"unknown category '{category}'", line=line, path=path)
