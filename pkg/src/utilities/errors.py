"""
 Copyright Duel 2025
"""


class MILError(Exception):
    """
    Base class for every error raised by the toolkit.
    """


class DomainError(MILError, ValueError):
    """
    An operation was called outside of its domain (bad shapes, empty bags, invalid ranges...).
    """


class CheckpointError(MILError):
    """
    A checkpoint could not be read back. The message names the offending tensor when there is one.
    """


class DatasetError(MILError):
    """
    A dataset on disk is missing, truncated or inconsistent with its manifest.
    """


class ConfigError(MILError):
    """
    Invalid run configuration or command-line usage.
    """
