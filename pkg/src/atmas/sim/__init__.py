"""Deterministic discrete-event simulation of the SAGIN protocol exchanges."""

from atmas.sim.adversary import Adversary
from atmas.sim.network import ChannelModel, EventKind, Network, SimEvent
from atmas.sim.runner import SimulationReport, World, build_world, collect, run
