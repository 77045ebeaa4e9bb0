"""Exceptions raised by the agent networks."""


class AgentError(Exception):
    """Raised for inconsistent agent dimensions or unusable token input."""
