# -*- coding: utf-8 -*-


class DeqganException(Exception):
    pass


class DeqganArgumentException(DeqganException):
    pass


class DeqganContractException(DeqganException):
    pass


class DeqganConfigException(DeqganException):
    pass


class DeqganTrainingException(DeqganException):
    def __init__(self, message, iteration=None, parameter=None, record=None):
        super(DeqganTrainingException, self).__init__(message)
        self.iteration = iteration
        self.parameter = parameter
        self.record = record


class DeqganSolverException(DeqganException):
    def __init__(self, message, residual=None):
        super(DeqganSolverException, self).__init__(message)
        self.residual = residual


class DeqganCacheException(DeqganException):
    pass


__all__ = [
    "DeqganException",
    "DeqganArgumentException",
    "DeqganContractException",
    "DeqganConfigException",
    "DeqganTrainingException",
    "DeqganSolverException",
    "DeqganCacheException",
]
