"""Recomputes expected.json with networkx, independently of the Rust code."""
import json
import networkx as nx

THRESHOLD, DAMPING, MAIN, SUB = 0.02, 0.85, 1.0, 0.5


def load(name):
    doc = json.load(open(f"{name}.graph.json"))["graph"]
    names = {n["id"]: n["canonical_name"] for n in doc["nodes"]}
    g = nx.Graph()
    g.add_nodes_from(names.values())
    for e in doc["edges"]:
        g.add_edge(names[e["a"]], names[e["b"]], weight=e["weight"])
    return g


def ppr(g, seeds):
    return nx.pagerank(g, alpha=DAMPING, personalization=seeds, weight="weight", tol=1e-15, max_iter=100000)


def select(g, main, sub):
    seeds = {n: MAIN for n in main} | {n: SUB for n in sub}
    scores = ppr(g, seeds)
    selected = list(main) + list(sub)
    rounds = [scores]

    def discover(scores):
        found = sorted((n for n, s in scores.items() if s > THRESHOLD and n not in selected),
                       key=lambda n: (-scores[n], n))
        selected.extend(found)
        return found

    queue = discover(scores)
    while queue:
        scores = ppr(g, {queue.pop(0): 1.0})
        queue.extend(discover(scores))
    return selected, rounds[0]


def count(g, k):
    deg = lambda n: (-g.degree(n), -g.degree(n, weight="weight"), n)
    return sorted(g.nodes, key=deg)[:k]


def scores(selected, truth):
    hit = len(set(selected) & truth)
    p = 100.0 * hit / len(selected)
    r = 100.0 * hit / len(truth)
    return {"selected": sorted(selected), "precision": p, "recall": r,
            "f1": 0.0 if p + r == 0 else 2 * p * r / (p + r)}


out = {}
for case in json.load(open("cases.json"))["dramas"]:
    g = load(case["name"])
    truth = {c["name"] for c in json.load(open(case["ground_truth"]))["characters"]}
    picked, round0 = select(g, case["main"], case["sub"])
    out[case["name"]] = {
        "round0_scores": dict(sorted(round0.items())),
        "ppr": scores(picked, truth),
        "count": scores(count(g, len(picked)), truth),
    }
with open("expected.json", "w") as f:
    json.dump(out, f, indent=2)
    f.write("\n")
