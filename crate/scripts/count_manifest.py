#!/usr/bin/env python3
"""Count the nodes and edges a graph built from an annotation file should have.

Usage: count_manifest.py ANNOTATIONS.json > MANIFEST.json
"""
import json
import sys
from collections import Counter


def count(doc):
    nodes = Counter()
    edges = Counter()
    entities = set()
    panels = 0
    for m in doc["macro_events"]:
        nodes["macro_event"] += 1
        events = m["events"]
        edges["precedes"] += max(len(events) - 1, 0)
        for e in events:
            nodes["event"] += 1
            edges["subevent_of"] += 1
            for p in e["panels"]:
                panels += 1
                edges["instantiates"] += 1
                chars = p.get("characters", [])
                nodes["character_instance"] += len(chars)
                edges["refers_to"] += len(chars)
                edges["co_occurs_with"] += len(chars) * (len(chars) - 1) // 2
                entities.update(c["entity_id"] for c in chars)
                nodes["object"] += len(p.get("objects", []))
                for a in p.get("actions", []):
                    nodes["action"] += 1
                    edges["has_agent"] += a.get("agent") is not None
                    edges["acts_on"] += a.get("target") is not None
                dialogues = p.get("dialogues", [])
                nodes["dialogue"] += len(dialogues)
                edges["grounded_in"] += len(dialogues)
    edges["precedes"] += max(len(doc["macro_events"]) - 1, 0)
    nodes["panel"] = panels
    nodes["character"] = len(entities)
    edges["precedes_reading"] = max(panels - 1, 0)
    edges["precedes_storytime"] = max(panels - 1, 0)
    nodes = {k: v for k, v in nodes.items() if v}
    edges = {k: v for k, v in edges.items() if v}
    return {
        "story_id": doc["story_id"],
        "nodes": dict(sorted(nodes.items())),
        "edges": dict(sorted(edges.items())),
        "node_total": sum(nodes.values()),
        "edge_total": sum(edges.values()),
    }


if __name__ == "__main__":
    with open(sys.argv[1]) as f:
        print(json.dumps(count(json.load(f)), indent=2))
