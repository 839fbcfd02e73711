"""Regenerate the bundled synthetic topologies (gaia11, nws22, exodus79).

The graphs only match the silo counts of the public Gaia, NWS and Exodus
networks; edges, latencies and bandwidths are synthetic.
"""
from pathlib import Path

from fedcdl.topology import format_topology, geometric

OUT = Path(__file__).resolve().parents[1] / "src" / "fedcdl" / "topologies"

SPECS = {
    "gaia11": dict(n=11, extra_degree=1.0, seed=11),
    "nws22": dict(n=22, extra_degree=1.6, seed=22),
    "exodus79": dict(n=79, extra_degree=0.5, seed=79),
}

if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    for name, kw in SPECS.items():
        graph = geometric(name=name, **kw)
        (OUT / f"{name}.txt").write_text(f"# {name}: synthetic stand-in\n" + format_topology(graph))
        print(name, graph.n, len(graph.edges))
