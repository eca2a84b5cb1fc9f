#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
errors.py

exception types raised by coilct
"""


class CoilError(Exception):
    '''
    Base class for every error raised deliberately by coilct.
    '''


class InvalidArgumentError(CoilError, ValueError):
    pass


class ConfigError(CoilError, ValueError):
    pass


class FormatError(CoilError, ValueError):
    '''
    A binary container failed one of its checks; `check` names it
    (e.g. 'magic', 'version', 'truncated').
    '''
    def __init__(self, check, message):
        super().__init__('%s: %s' % (check, message))
        self.check = check


class NumericOverflowError(CoilError, ArithmeticError):
    def __init__(self, layer, message=None):
        super().__init__(message or 'non-finite activation in layer %d' % layer)
        self.layer = layer


class TrainingDivergedError(CoilError, ArithmeticError):
    def __init__(self, epoch, message=None):
        super().__init__(message or 'training diverged at epoch %d' % epoch)
        self.epoch = epoch


class SolverDivergedError(CoilError, ArithmeticError):
    def __init__(self, method, step_size, iteration):
        super().__init__('%s diverged at iteration %d with step size %.6g; '
                         'try a smaller step size' % (method, iteration, step_size))
        self.method = method
        self.step_size = step_size
        self.iteration = iteration
