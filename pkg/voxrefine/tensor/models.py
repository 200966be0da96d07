class TensorError(ValueError):
	"""Base class for all tensor errors"""


class ShapeError(TensorError):
	"""Error raised when operand shapes do not fit an operation"""
