"""Regenerate the shipped ALARM and ECOLI70 bn-text files.

ALARM keeps the published structure and cardinalities; its CPT entries are
seeded Dirichlet draws.  ECOLI70 keeps the published node names, node count
and arc count; its arcs and coefficients are a seeded random stand-in.
Replace either file with a conversion of the original network when available
(see README, "Reference networks").
"""

from pathlib import Path

import numpy as np

from bnarena.bench import save_bn_text
from bnarena.graph import Dag, random_dag
from bnarena.model import BayesNet, DiscreteLocal, GaussianLocal, Variable

OUT = Path(__file__).resolve().parents[1] / "src" / "bnarena" / "data"

ALARM = """
HIST:2:LVFAILURE CVP:3:LVEDVOLUME PCWP:3:LVEDVOLUME HYPOVOLEMIA:2:
LVEDVOLUME:3:HYPOVOLEMIA,LVFAILURE LVFAILURE:2: STROKEVOLUME:3:HYPOVOLEMIA,LVFAILURE
ERRLOWOUTPUT:2: HRBP:3:ERRLOWOUTPUT,HR HREKG:3:ERRCAUTER,HR ERRCAUTER:2:
HRSAT:3:ERRCAUTER,HR INSUFFANESTH:2: ANAPHYLAXIS:2: TPR:3:ANAPHYLAXIS
EXPCO2:4:ARTCO2,VENTLUNG KINKEDTUBE:2: MINVOL:4:INTUBATION,VENTLUNG FIO2:2:
PVSAT:3:FIO2,VENTALV SAO2:3:PVSAT,SHUNT PAP:3:PULMEMBOLUS PULMEMBOLUS:2:
SHUNT:2:INTUBATION,PULMEMBOLUS INTUBATION:3: PRESS:4:INTUBATION,KINKEDTUBE,VENTTUBE
DISCONNECT:2: MINVOLSET:3: VENTMACH:4:MINVOLSET VENTTUBE:4:DISCONNECT,VENTMACH
VENTLUNG:4:INTUBATION,KINKEDTUBE,VENTTUBE VENTALV:4:INTUBATION,VENTLUNG ARTCO2:3:VENTALV
CATECHOL:2:ARTCO2,INSUFFANESTH,SAO2,TPR HR:3:CATECHOL CO:3:HR,STROKEVOLUME BP:3:CO,TPR
"""

ECOLI_NODES = """aceB asnA atpD atpG b1191 b1583 b1963 cchB cspA cspG dnaG dnaJ dnaK eutG
fixC flgD folK ftsJ gltA hupB ibpB icdA lacA lacY lacZ lpdA mopB nmpC nuoM pspA pspB
sucA sucD tnaA yaeM yceP ycgX yecO yedE yfaD yfiA ygbD ygcE yhdM yheI yjbO""".split()

LEVELS = {2: ("LOW", "HIGH"), 3: ("LOW", "NORMAL", "HIGH"), 4: ("ZERO", "LOW", "NORMAL", "HIGH")}


def _row(rng, r):
    p = rng.dirichlet(np.full(r, 2.0))
    p = np.maximum(p, 0.01)
    p = np.round(p / p.sum(), 6)
    p[-1] = round(1.0 - p[:-1].sum(), 6)
    return p


def alarm():
    rng = np.random.default_rng(1989)
    spec = {}
    for tok in ALARM.split():
        name, card, pa = tok.split(":")
        spec[name] = (int(card), [p for p in pa.split(",") if p])
    nodes = list(spec)
    dag = Dag(nodes, [(p, n) for n, (_, ps) in spec.items() for p in ps])
    variables = tuple(Variable(n, "discrete", LEVELS[spec[n][0]]) for n in nodes)
    locs = {}
    for n in nodes:
        r, ps = spec[n]
        q = int(np.prod([spec[p][0] for p in ps])) if ps else 1
        locs[n] = DiscreteLocal(n, tuple(ps), np.array([_row(rng, r) for _ in range(q)]))
    return BayesNet(dag, variables, locs, "discrete", "alarm")


def ecoli70():
    rng = np.random.default_rng(70)
    dag = random_dag(ECOLI_NODES, 70, rng)
    locs = {}
    for n in ECOLI_NODES:
        ps = tuple(dag.ordered_parents(n))
        betas = tuple(round(float(b), 4) for b in rng.choice([-1, 1], len(ps)) * rng.uniform(0.3, 1.0, len(ps)))
        locs[n] = GaussianLocal(n, ps, round(float(rng.normal(0, 0.5)), 4), betas, round(float(rng.uniform(0.2, 1.0)), 4))
    return BayesNet(dag, tuple(Variable(n, "gaussian") for n in ECOLI_NODES), locs, "gaussian", "ecoli70")


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    for net, note in ((alarm(), "ALARM structure and cardinalities; CPT entries are synthetic."),
                      (ecoli70(), "ECOLI70 node names and size; arcs and coefficients are a synthetic stand-in.")):
        path = OUT / f"{net.name}.bn"
        save_bn_text(net, path)
        path.write_text(f"# {note}\n" + path.read_text())
        print(path, len(net.nodes), net.n_arcs, net.n_params())
