#!/usr/bin/env python3
"""Convert native 3DSSG annotation files into this repo's scene-graph JSON.

Inputs (the layout shipped by the 3DSSG release):
  objects.json        {"scans": [{"scan": <id>, "objects": [{"id": "3",
                       "label": "chair", "attributes": {...} | [...], ...}]}]}
  relationships.json  {"scans": [{"scan": <id>, "relationships":
                       [[subj_id, obj_id, rel_id, "rel name"], ...]}]}
  semseg dir          optional; <scan-id>/semseg.v2.json files whose segGroups
                      carry oriented bounding boxes (obb). Axis-aligned boxes
                      are derived from the OBB corner extremes.

Output: one <scan-id>.json per scan in the schema consumed by `t2sg ingest`:
  {"id": str,
   "objects": [{"id": int, "label": str, "attributes": [str],
                "bbox": {"min": [x,y,z], "max": [x,y,z]}}],
   "relations": [[src_id, "relation", dst_id]]}

Objects without a recoverable box are emitted without "bbox"; `t2sg ingest`
drops their edges during distance filtering and reports the count.
"""

import argparse
import itertools
import json
import sys
from pathlib import Path


def flatten_attributes(attrs):
    if attrs is None:
        return []
    if isinstance(attrs, list):
        return [str(a).strip().lower() for a in attrs if str(a).strip()]
    if isinstance(attrs, dict):
        out = []
        for values in attrs.values():
            if isinstance(values, list):
                out.extend(str(v).strip().lower() for v in values if str(v).strip())
            elif str(values).strip():
                out.append(str(values).strip().lower())
        return out
    return [str(attrs).strip().lower()]


def aabb_from_obb(obb):
    centroid = obb.get("centroid")
    lengths = obb.get("axesLengths")
    axes = obb.get("normalizedAxes")
    if not (centroid and lengths and axes and len(axes) == 9):
        return None
    lo = [float("inf")] * 3
    hi = [float("-inf")] * 3
    for sx, sy, sz in itertools.product((-0.5, 0.5), repeat=3):
        corner = [
            centroid[k]
            + sx * lengths[0] * axes[0 + k]
            + sy * lengths[1] * axes[3 + k]
            + sz * lengths[2] * axes[6 + k]
            for k in range(3)
        ]
        for k in range(3):
            lo[k] = min(lo[k], corner[k])
            hi[k] = max(hi[k], corner[k])
    return {"min": lo, "max": hi}


def load_semseg_boxes(semseg_dir, scan_id):
    path = Path(semseg_dir) / scan_id / "semseg.v2.json"
    if not path.exists():
        path = Path(semseg_dir) / scan_id / "semseg.json"
    if not path.exists():
        return {}
    with open(path) as f:
        seg = json.load(f)
    boxes = {}
    for group in seg.get("segGroups", []):
        obb = group.get("obb")
        if obb is None:
            continue
        box = aabb_from_obb(obb)
        if box is not None:
            boxes[int(group["id"])] = box
    return boxes


def main():
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--objects", required=True, help="3DSSG objects.json")
    ap.add_argument("--relationships", required=True, help="3DSSG relationships.json")
    ap.add_argument("--semseg", help="directory of <scan-id>/semseg.v2.json files (for bboxes)")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--scan", action="append", default=[],
                    help="only convert these scan ids (repeatable; default: all)")
    args = ap.parse_args()

    with open(args.objects) as f:
        objects_doc = json.load(f)
    with open(args.relationships) as f:
        rel_doc = json.load(f)

    rel_by_scan = {s["scan"]: s.get("relationships", []) for s in rel_doc.get("scans", [])}
    wanted = set(args.scan)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    converted = 0
    for scan in objects_doc.get("scans", []):
        scan_id = scan["scan"]
        if wanted and scan_id not in wanted:
            continue

        boxes = load_semseg_boxes(args.semseg, scan_id) if args.semseg else {}
        known_ids = set()
        objects = []
        for obj in scan.get("objects", []):
            oid = int(obj["id"])
            known_ids.add(oid)
            entry = {
                "id": oid,
                "label": str(obj.get("label", "")).strip().lower(),
                "attributes": flatten_attributes(obj.get("attributes")),
            }
            if oid in boxes:
                entry["bbox"] = boxes[oid]
            objects.append(entry)

        relations = []
        seen = set()
        dangling = 0
        for rel in rel_by_scan.get(scan_id, []):
            # [subject, object, relation-id, "relation name"]
            src, dst = int(rel[0]), int(rel[1])
            name = str(rel[3]).strip().lower()
            if src not in known_ids or dst not in known_ids or src == dst or not name:
                dangling += 1
                continue
            key = (src, name, dst)
            if key in seen:
                continue
            seen.add(key)
            relations.append([src, name, dst])

        doc = {"id": scan_id, "objects": objects, "relations": relations}
        with open(out_dir / f"{scan_id}.json", "w") as f:
            json.dump(doc, f, indent=2, sort_keys=True)
            f.write("\n")
        converted += 1
        if dangling:
            print(f"{scan_id}: skipped {dangling} unusable relationship entries", file=sys.stderr)

    print(f"converted {converted} scans into {out_dir}")
    if converted == 0:
        sys.exit(1)


if __name__ == "__main__":
    main()
