"""Writes the prompt goldens from an independent re-implementation of template
filling and token-level message passing. Run from this directory."""
import json
import re

ACTIONS = {
    "multimodal-generation": "This is a multi-modal generation task. Please predict the missing modality based on the given modality: {modality}.",
    "multimodal-matching": "This task involves matching multi-modal information. Given two modalities: {modality 1} and {modality 2}, please determine whether they correspond with each other.",
    "recommendation": "This is a recommendation task. Given the user node and item node: {user node} and {item node}, please tell me whether these two nodes should connect to each other.",
    "node-classification-cora": "Given a node-centered graph: {node}, each node represents a paper, we need to classify the center node into 7 classes: Case Based, Genetic Algorithms, Neural Networks, Probabilistic Methods, Reinforcement Learning, Rule Learning, Theory, please tell me which class the center node belongs to?",
    "node-classification-pubmed": "Given a node-centered graph: {node}, each node represents a paper about Diabetes, we need to classify the center node into 3 classes: Diabetes Mellitus Experimental, Diabetes Mellitus Type 1, and Diabetes Mellitus Type 2, please tell me which class the center node belongs to?",
    "link-prediction": "Given two nodes information: {node 1} and {node 2}, please tell me whether two center nodes in the subgraphs should connect to each other.",
    "graph-classification-hiv": "Human immunodeficiency viruses (HIV) are a type of retrovirus, which induces acquired immune deficiency syndrome (AIDs). Please determine whether this molecule {molecule} is effective for this assay.",
    "multi-agent-collaboration": "This is a Multi-Agent Collaborative Generation task for creating dynamic conversational interactions. Given a user query: {user query} and context of three distinct agents: {Patient Agent Context}, {Measurement Agent Context}, and {Moderato Agent Context}, Please generate a well-rounded response to the user's question.",
    "retrieval-augmented-generation": "This is a Retrieval-Augmented Generation task for improving response quality in dialogue systems. Given a user query: {user query} and a set of retrieved documents: {retrieved documents}, the goal is to generate a coherent and contextually relevant response. Please generate a response that integrates information from the retrieved documents to accurately address the user's query.",
    "planning-optimization": "This is an embodied household task, please predict the next decision-making behavior based on multimodal historical information: {historical information}.",
}
UNIFY = "The image's text description is: {image's text description}, original text is: {original text}, table description is: {table description}."
AGGREGATE = "The text description of the central node is: {center node}, and the text descriptions of the neighboring nodes are: {neighbor nodes}."


def fill(body, values):
    return re.sub(r"\{([^{}]+)\}", lambda m: values[m.group(1)], body)


def slot_value(slot):
    return "<" + slot.upper() + ">"


def unified(node):
    image = "MOCK_CAPTION:" + node["image_ref"] if "image_ref" in node else "N/A"
    text = node.get("text", "N/A")
    table = node.get("table")
    table_text = ", ".join(f"{c} is {v}" for c, v in zip(table["columns"], table["values"])) if table else "N/A"
    return fill(UNIFY, {"image's text description": image, "original text": text, "table description": table_text})


def token_pass(case):
    ids = [n["id"] for n in case["nodes"]]
    adj = {i: set() for i in ids}
    for e in case["edges"]:
        adj[e["src"]].add(e["dst"])
        adj[e["dst"]].add(e["src"])
    dist = {case["center"]: 0}
    frontier = [case["center"]]
    for d in range(1, case["hops"] + 1):
        nxt = []
        for v in frontier:
            for u in adj[v]:
                if u not in dist:
                    dist[u] = d
                    nxt.append(u)
        frontier = nxt
    base = {n["id"]: unified(n) for n in case["nodes"] if n["id"] in dist}
    evict = sorted((i for i in dist if i != case["center"]), key=lambda i: (-dist[i], [-ord(ch) for ch in i]))

    def render(included, v, l):
        if l == 0:
            return base[v]
        own = render(included, v, l - 1)
        parts = ["[" + render(included, u, l - 1) + "]" for u in sorted(adj[v]) if u in included]
        return fill(AGGREGATE, {"center node": own, "neighbor nodes": ", ".join(parts)})

    for k in range(len(evict) + 1):
        included = set(dist) - set(evict[:k])
        text = render(included, case["center"], case["hops"])
        if len(text.split()) <= case["budget"]:
            return text, evict[:k]
    raise SystemExit(f"{case['name']}: center alone exceeds the budget")


def main():
    for tid, body in ACTIONS.items():
        slots = re.findall(r"\{([^{}]+)\}", body)
        with open(f"action-{tid}.txt", "w") as f:
            f.write(fill(body, {s: slot_value(s) for s in slots}))
    cases = json.load(open("cases.json"))
    for case in cases["token_mp"]:
        text, dropped = token_pass(case)
        with open(f"token-{case['name']}.txt", "w") as f:
            f.write(text)
        print(case["name"], len(text.split()), "tokens, dropped", dropped)


main()
