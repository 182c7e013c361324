"""Event-triggered competency self-assessment for a gridworld delivery agent."""
__version__ = "0.1.0"
