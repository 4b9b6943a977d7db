"""PNML reading and writing for the place/transition subset.

Accepted input follows the ISO 15909-2 core: ``<place>`` with an
``<initialMarking>``, ``<transition>`` with a ``<name>`` used as the
activity label, arcs with ``source``/``target`` references.  A transition
without a name, or one flagged invisible through a ``toolspecific``
element, is parsed as silent.  The final marking comes from a
``<finalmarkings>`` block; when the file lacks one, callers may supply a
sidecar mapping (see :func:`load_model`).
"""

from __future__ import annotations

import json
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Mapping, Optional

from .errors import PnmlError
from .nets import SILENT, Marking, SystemNet

PNML_NET_TYPE = "http://www.pnml.org/version-2009/grammar/ptnet"
INVISIBLE_ACTIVITY = "$invisible$"


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _child(el: ET.Element, name: str) -> Optional[ET.Element]:
    for sub in el:
        if _local(sub.tag) == name:
            return sub
    return None


def _text_of(el: Optional[ET.Element]) -> Optional[str]:
    if el is None:
        return None
    text_el = _child(el, "text")
    if text_el is not None:
        return text_el.text
    return el.text


def _is_invisible(transition_el: ET.Element) -> bool:
    for sub in transition_el:
        if _local(sub.tag) == "toolspecific":
            if sub.get("activity") == INVISIBLE_ACTIVITY:
                return True
            visible = _child(sub, "visible")
            if visible is not None and (visible.text or "").strip().lower() == "false":
                return True
    return False


def parse_pnml(text: str, final_marking: Mapping[str, int] | None = None) -> SystemNet:
    """Parse a PNML document holding exactly one net.

    ``final_marking`` is only consulted when the document has no
    ``<finalmarkings>`` block.
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise PnmlError(f"malformed XML: {exc}") from exc
    if _local(root.tag) == "net":
        nets = [root]
    else:
        nets = [el for el in root.iter() if _local(el.tag) == "net"]
    if len(nets) != 1:
        raise PnmlError(f"expected exactly one <net>, found {len(nets)}")
    net_el = nets[0]

    # The <place> elements inside <finalmarkings> are references, not
    # declarations; collect that subtree first so the main walk skips it.
    final_els = [el for el in net_el.iter() if _local(el.tag) == "finalmarkings"]
    skip = {id(sub) for fm in final_els for sub in fm.iter()}

    places: dict[str, int] = {}
    labeling: dict[str, Optional[str]] = {}
    raw_arcs: list[tuple[Optional[str], Optional[str], Optional[str]]] = []

    for el in net_el.iter():
        if id(el) in skip:
            continue
        tag = _local(el.tag)
        if tag == "place":
            pid = el.get("id")
            if not pid:
                raise PnmlError("place without an id attribute")
            if pid in places:
                raise PnmlError(f"duplicate place id {pid!r}")
            tokens_text = _text_of(_child(el, "initialMarking"))
            tokens = 0
            if tokens_text is not None and tokens_text.strip():
                try:
                    tokens = int(tokens_text.strip())
                except ValueError as exc:
                    raise PnmlError(f"place {pid!r}: bad initialMarking {tokens_text!r}") from exc
                if tokens < 0:
                    raise PnmlError(f"place {pid!r}: negative initialMarking")
            places[pid] = tokens
        elif tag == "transition":
            tid = el.get("id")
            if not tid:
                raise PnmlError("transition without an id attribute")
            if tid in labeling:
                raise PnmlError(f"duplicate transition id {tid!r}")
            label = _text_of(_child(el, "name"))
            if label is not None:
                label = label.strip() or None
            if _is_invisible(el):
                label = SILENT
            labeling[tid] = label
        elif tag == "arc":
            raw_arcs.append((el.get("source"), el.get("target"), el.get("id")))

    arcs: set[tuple[str, str]] = set()
    known = set(places) | set(labeling)
    for src, dst, arc_id in raw_arcs:
        where = f"arc {arc_id!r}" if arc_id else "arc"
        if not src or not dst:
            raise PnmlError(f"{where}: missing source/target attribute")
        if src not in known or dst not in known:
            raise PnmlError(f"{where}: dangling reference {src!r} -> {dst!r}")
        arcs.add((src, dst))

    if final_els:
        final_counts: dict[str, int] = {}
        for fm in final_els:
            for el in fm.iter():
                if _local(el.tag) == "place":
                    ref = el.get("idref") or el.get("id")
                    if not ref or ref not in places:
                        raise PnmlError(f"final marking references unknown place {ref!r}")
                    count_text = _text_of(el)
                    count = int(count_text.strip()) if count_text and count_text.strip() else 1
                    final_counts[ref] = final_counts.get(ref, 0) + count
        final = Marking(final_counts)
    elif final_marking is not None:
        unknown = [p for p in final_marking if p not in places]
        if unknown:
            raise PnmlError(f"final marking references unknown places {unknown!r}")
        final = Marking(final_marking)
    else:
        raise PnmlError("no <finalmarkings> block and no sidecar final marking given")

    initial = Marking({p: n for p, n in places.items() if n})
    if not initial:
        raise PnmlError("no place carries an initial token")

    return SystemNet(
        places=frozenset(places),
        transitions=frozenset(labeling),
        arcs=frozenset(arcs),
        labeling=labeling,
        initial_marking=initial,
        final_marking=final,
        name=net_el.get("id") or "net",
    )


def net_to_element(net: SystemNet) -> ET.Element:
    """Build the ``<pnml>`` element tree for a net (sorted, deterministic)."""
    pnml = ET.Element("pnml")
    net_el = ET.SubElement(pnml, "net", {"id": net.name, "type": PNML_NET_TYPE})
    page = ET.SubElement(net_el, "page", {"id": "page0"})
    initial = net.initial_marking.as_dict()
    for pid in sorted(net.places):
        place_el = ET.SubElement(page, "place", {"id": pid})
        name_el = ET.SubElement(place_el, "name")
        ET.SubElement(name_el, "text").text = pid
        if initial.get(pid):
            marking_el = ET.SubElement(place_el, "initialMarking")
            ET.SubElement(marking_el, "text").text = str(initial[pid])
    for tid in sorted(net.transitions):
        trans_el = ET.SubElement(page, "transition", {"id": tid})
        label = net.label(tid)
        if label is SILENT:
            ET.SubElement(
                trans_el, "toolspecific",
                {"tool": "ProM", "version": "6.4", "activity": INVISIBLE_ACTIVITY},
            )
        else:
            name_el = ET.SubElement(trans_el, "name")
            ET.SubElement(name_el, "text").text = label
    for i, (src, dst) in enumerate(sorted(net.arcs)):
        ET.SubElement(page, "arc", {"id": f"a{i}", "source": src, "target": dst})
    finals = ET.SubElement(net_el, "finalmarkings")
    marking_el = ET.SubElement(finals, "marking")
    for pid, count in net.final_marking.items():
        place_el = ET.SubElement(marking_el, "place", {"idref": pid})
        ET.SubElement(place_el, "text").text = str(count)
    return pnml


def serialize_pnml(net: SystemNet) -> str:
    """Render a net as PNML text that :func:`parse_pnml` accepts."""
    root = net_to_element(net)
    ET.indent(root)
    return ET.tostring(root, encoding="unicode", xml_declaration=True)


def load_model(path: str | Path) -> SystemNet:
    """Read a PNML file, consulting ``<stem>.final.json`` for the final
    marking when the document itself lacks one.

    The sidecar schema is ``{"final": {"place_id": count, ...}}``.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    sidecar = path.with_suffix(".final.json")
    final: Mapping[str, int] | None = None
    if sidecar.exists():
        try:
            payload = json.loads(sidecar.read_text(encoding="utf-8"))
            final = {str(k): int(v) for k, v in payload["final"].items()}
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise PnmlError(f"bad sidecar {sidecar.name}: {exc}") from exc
    return parse_pnml(text, final_marking=final)
