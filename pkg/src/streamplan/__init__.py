"""streamplan: overlap-plan scheduling and simulation for weight streaming.

Generates plans that stream DNN weights from disk through unified memory
into texture memory concurrently with layer execution, and replays those
plans (or naive baselines) under a deterministic discrete-event cost model.
"""

__version__ = "0.1.0"
