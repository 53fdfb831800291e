#!/usr/bin/env python
# -*- coding: utf-8 -*-
# Copyright (C) 2023 Benjamin Thomas Schwertfeger
# Github: https://github.com/btschwertfeger
#

"""Module that provides custom exceptions for the reslstm package"""
import functools
from typing import Any, Dict, Optional, Type, Union


def docstring_message(cls: Any) -> Any:
    """
    Decorates an exception to make its docstring its default message.

    - https://stackoverflow.com/a/66491013/13618168
    """
    cls_init = cls.__init__

    @functools.wraps(cls.__init__)
    def wrapped_init(
        self: "ReslstmError",
        msg: Optional[Union[str, dict]] = None,
        *args: tuple,
        **kwargs: Dict[str, Any],
    ) -> None:
        err_message: str = (
            self.__doc__ if not msg else f"{self.__doc__}\nDetails: {msg}"
        )
        cls_init(self, err_message, *args, **kwargs)

    cls.__init__ = wrapped_init
    return cls


class ReslstmError(Exception):
    """Base class of every error raised by reslstm."""


#: Exit status of the command-line interface for each error family.
EXIT_SUCCESS: int = 0
EXIT_USAGE: int = 1
EXIT_DATA: int = 2
EXIT_NUMERICAL: int = 3


class ReslstmException:
    """
    Container of the custom exceptions raised by the reslstm modules.

    Every exception is available as attribute, e.g.
    ``ReslstmException.ShapeError``, and can also be looked up by its
    category name using :func:`ReslstmException.get_exception`.

    .. code-block:: python
        :linenos:
        :caption: Catching a shape error

        >>> from reslstm.exceptions import ReslstmException
        >>> try:
        ...     matmul(a, b)
        ... except ReslstmException.ShapeError as exc:
        ...     print(exc)
    """

    @docstring_message
    class ShapeError(ReslstmError):
        """The operand shapes do not conform."""

    @docstring_message
    class ArgumentError(ReslstmError):
        """An argument is empty, out of range or inconsistent."""

    @docstring_message
    class DataError(ReslstmError):
        """The input data is malformed or does not match the vocabulary."""

    @docstring_message
    class ConfigurationError(ReslstmError):
        """The configuration is invalid."""

    @docstring_message
    class CheckpointError(ReslstmError):
        """The checkpoint file is corrupt, truncated or incompatible."""

    class VocabularyMismatchError(CheckpointError):
        """The checkpoint was trained against a different vocabulary."""

    @docstring_message
    class TrainingError(ReslstmError):
        """A numerical problem occurred during training."""

    class DivergenceError(TrainingError):
        """Training diverged (non-finite loss)."""

        def __init__(
            self: "ReslstmException.DivergenceError",
            msg: Optional[str] = None,
            last_checkpoint: Optional[str] = None,
        ) -> None:
            self.last_checkpoint: Optional[str] = last_checkpoint
            details: str = self.__doc__ if not msg else f"{self.__doc__}\nDetails: {msg}"
            if last_checkpoint is not None:
                details += f"\nLast good checkpoint: {last_checkpoint}"
            ReslstmError.__init__(self, details)

    @docstring_message
    class OracleError(ReslstmError):
        """The oracle budget is exceeded or its preconditions are not met."""

    @docstring_message
    class GradientCheckError(ReslstmError):
        """Analytic gradients disagree with finite differences."""

    EXCEPTION_ASSIGNMENT: Dict[str, Type[ReslstmError]] = {}
    EXIT_STATUS: Dict[Type[ReslstmError], int] = {}

    @classmethod
    def get_exception(
        cls: Type["ReslstmException"], name: str
    ) -> Optional[Type[ReslstmError]]:
        """Returns the exception given by category name if available"""
        return cls.EXCEPTION_ASSIGNMENT.get(name)

    @classmethod
    def exit_status(cls: Type["ReslstmException"], exc: BaseException) -> int:
        """
        Maps an exception to the stable exit status of the command-line
        interface (``1`` usage, ``2`` data, ``3`` numerical failure).

        :param exc: The raised exception
        :type exc: BaseException
        :return: The exit status
        :rtype: int
        """
        for klass in type(exc).__mro__:
            if klass in cls.EXIT_STATUS:
                return cls.EXIT_STATUS[klass]
        if isinstance(exc, (OSError, UnicodeDecodeError)):
            return EXIT_DATA
        return EXIT_USAGE


ReslstmException.EXCEPTION_ASSIGNMENT.update(
    {
        "shape": ReslstmException.ShapeError,
        "argument": ReslstmException.ArgumentError,
        "data": ReslstmException.DataError,
        "configuration": ReslstmException.ConfigurationError,
        "checkpoint": ReslstmException.CheckpointError,
        "vocabulary": ReslstmException.VocabularyMismatchError,
        "training": ReslstmException.TrainingError,
        "divergence": ReslstmException.DivergenceError,
        "oracle": ReslstmException.OracleError,
        "gradcheck": ReslstmException.GradientCheckError,
    }
)

ReslstmException.EXIT_STATUS.update(
    {
        ReslstmException.ConfigurationError: EXIT_USAGE,
        ReslstmException.ArgumentError: EXIT_USAGE,
        ReslstmException.DataError: EXIT_DATA,
        ReslstmException.CheckpointError: EXIT_DATA,
        ReslstmException.ShapeError: EXIT_NUMERICAL,
        ReslstmException.TrainingError: EXIT_NUMERICAL,
        ReslstmException.OracleError: EXIT_NUMERICAL,
        ReslstmException.GradientCheckError: EXIT_NUMERICAL,
    }
)
