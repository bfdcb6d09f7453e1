from .arms import (ArmInstance, ArmSet, availability_masks, fog_arm_grid, fog_arm_instance,
                   stationary_arm_instance)
from .demand import DemandProcess, demand_next
from .fog import FogInstance, FogNetwork, default_fog_network, fog_slot, make_fog_instance
from .mdp import FiniteMDP, random_mdp
from .queues import QueueNetwork, QueueState, default_queue_network, queue_step
from .slots import FeedbackError, FeedbackMode, QuadraticSlot, SlotFunctions

__all__ = [
    "ArmInstance", "ArmSet", "availability_masks", "fog_arm_grid", "fog_arm_instance",
    "stationary_arm_instance", "DemandProcess", "demand_next", "FogInstance", "FogNetwork",
    "default_fog_network", "fog_slot", "make_fog_instance", "FiniteMDP", "random_mdp",
    "QueueNetwork", "QueueState", "default_queue_network", "queue_step", "FeedbackError",
    "FeedbackMode", "QuadraticSlot", "SlotFunctions",
]
