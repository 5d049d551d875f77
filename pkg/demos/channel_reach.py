"""How far can a beam go?

Walks through the turbulence channel: reliability against distance, the
reach L that the threshold implies, and how L moves with turbulence strength.

    python3 demos/channel_reach.py
"""

from fsobackhaul.reliability import ChannelParams, link_reliability, max_transmission_distance

params = ChannelParams()
L = max_transmission_distance(params)
print(f"reach at the default channel: L = {L:.1f} m (threshold {params.reliability_threshold})")

print("\n distance   reliability")
for l in (200, 500, 1000, L, 2000, 4000):
    print(f"{l:9.1f}   {link_reliability(l, params):.6f}")

# stronger turbulence shortens the reach quickly
print("\n     Cn2     reach [m]")
for cn2 in (1e-16, 5e-16, 1e-15, 5e-15, 1e-14):
    print(f"{cn2:8.0e}   {max_transmission_distance(ChannelParams(cn2=cn2)):8.1f}")
