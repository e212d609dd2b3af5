from graph.interaction_graph import ActivationClass, InteractionGraph, fingerprint
from graph.recorder import TraceRecorder

__all__ = ["ActivationClass", "InteractionGraph", "fingerprint", "TraceRecorder"]
