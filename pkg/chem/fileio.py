"""Readers and writers: XYZ, MOL V2000 (counts line, atom block, bond block) and the
JSON-lines dataset manifest."""

import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

from pydantic import BaseModel, ValidationError

from chem.molecule import Conformation, Molecule, element_number
from utils.errors import DataError, ParseError

logger = logging.getLogger(__name__)


def parse_xyz(text: str) -> Tuple[List[str], Conformation]:
    """Parse standard XYZ text into an element list and a conformation."""
    lines = text.splitlines()
    if len(lines) < 2:
        raise ParseError("XYZ text needs an atom-count line and a comment line")
    try:
        declared = int(lines[0].split()[0])
    except (IndexError, ValueError):
        raise ParseError(f"Invalid XYZ atom count line: {lines[0]!r}") from None

    atom_lines = [line for line in lines[2:] if line.strip()]
    if len(atom_lines) != declared:
        raise ParseError(f"XYZ declares {declared} atoms but contains {len(atom_lines)} atom lines")

    elements, coords = [], []
    for number, line in enumerate(atom_lines, start=3):
        fields = line.split()
        if len(fields) < 4:
            raise ParseError(f"Line {number}: expected 'Element x y z', got {line!r}")
        element_number(fields[0])
        try:
            coords.extend(float(value) for value in fields[1:4])
        except ValueError:
            raise ParseError(f"Line {number}: unparseable coordinate in {line!r}") from None
        elements.append(fields[0].capitalize())
    return elements, Conformation(coords)


def emit_xyz(elements: Sequence[str], conformation: Conformation, comment: str = "") -> str:
    """XYZ text with coordinates printed to 9 decimal places."""
    if len(elements) != conformation.n_atoms:
        raise DataError(f"{len(elements)} elements for {conformation.n_atoms} positions")
    lines = [str(len(elements)), comment.replace("\n", " ")]
    for symbol, (x, y, z) in zip(elements, conformation.positions):
        lines.append(f"{symbol:<2s} {x:.9f} {y:.9f} {z:.9f}")
    return "\n".join(lines) + "\n"


def parse_mol(text: str) -> Tuple[Molecule, Conformation]:
    """Parse the counts line, atom block and bond block of a MOL V2000 record."""
    lines = text.splitlines()
    if len(lines) < 4:
        raise ParseError("MOL text is shorter than its header and counts line")
    counts = lines[3]
    if "V2000" not in counts:
        marker = "V3000" if "V3000" in counts else "none"
        raise ParseError(f"Only MOL V2000 is supported (counts line marker: {marker})")
    try:
        n_atoms, n_bonds = int(counts[0:3]), int(counts[3:6])
    except ValueError:
        raise ParseError(f"Invalid V2000 counts line: {counts!r}") from None

    if len(lines) < 4 + n_atoms + n_bonds:
        raise ParseError(f"MOL text declares {n_atoms} atoms and {n_bonds} bonds but is truncated")

    elements, coords = [], []
    ignored_fields = 0
    for line in lines[4:4 + n_atoms]:
        fields = line.split()
        if len(fields) < 4:
            raise ParseError(f"Invalid MOL atom line: {line!r}")
        try:
            coords.extend(float(value) for value in fields[0:3])
        except ValueError:
            raise ParseError(f"Unparseable coordinate in MOL atom line: {line!r}") from None
        element_number(fields[3])
        elements.append(fields[3].capitalize())
        if any(value not in ("0",) for value in fields[4:6]):
            ignored_fields += 1

    bonds = []
    for line in lines[4 + n_atoms:4 + n_atoms + n_bonds]:
        try:
            i, j, order = int(line[0:3]), int(line[3:6]), int(line[6:9])
        except ValueError:
            raise ParseError(f"Invalid MOL bond line: {line!r}") from None
        if not (1 <= i <= n_atoms and 1 <= j <= n_atoms):
            raise ParseError(f"Bond ({i}, {j}) references an atom outside 1..{n_atoms}")
        if len(line) >= 12 and line[9:12].strip() not in ("", "0"):
            ignored_fields += 1
        bonds.append((i - 1, j - 1, order))

    if ignored_fields:
        logger.warning(f"Ignored charge, isotope or stereo fields on {ignored_fields} MOL lines")
    return Molecule.from_topology(elements, bonds), Conformation(coords)


def emit_mol(molecule: Molecule, conformation: Conformation, title: str = "") -> str:
    molecule.check_conformation(conformation)
    lines = [title, f"  {'frad-desk':<8s}3D", ""]
    lines.append(f"{molecule.n_atoms:3d}{len(molecule.bonds):3d}  0  0  0  0  0  0  0  0999 V2000")
    for symbol, (x, y, z) in zip(molecule.elements, conformation.positions):
        lines.append(f"{x:10.4f}{y:10.4f}{z:10.4f} {symbol:<3s} 0  0  0  0  0  0  0  0  0  0  0  0")
    for i, j, order in molecule.bonds:
        lines.append(f"{i + 1:3d}{j + 1:3d}{order:3d}  0")
    lines.append("M  END")
    return "\n".join(lines) + "\n"


def read_structure(path: Path) -> Tuple[List[str], Conformation, Optional[Molecule]]:
    """Load an XYZ or MOL file; XYZ carries no bonds so the molecule is None."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"Input file not found: {path}")
    text = path.read_text()
    if path.suffix.lower() in (".mol", ".sdf"):
        molecule, conformation = parse_mol(text)
        return list(molecule.elements), conformation, molecule
    elements, conformation = parse_xyz(text)
    return elements, conformation, None


class ManifestRecord(BaseModel):
    """One line of the dataset manifest."""

    elements: List[str]
    bonds: List[Tuple[int, int, int]]
    coords: List[float]
    tag: str = ""
    label: Optional[float] = None
    gap: Optional[float] = None
    forces: Optional[List[float]] = None
    force_field: Optional[Dict[str, Any]] = None

    def to_structure(self) -> Tuple[Molecule, Conformation]:
        return Molecule.from_topology(self.elements, self.bonds), Conformation(self.coords)


def write_manifest(path: Path, records: Iterable[ManifestRecord]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as handle:
        for record in records:
            handle.write(record.model_dump_json() + "\n")
    return path


def read_manifest(path: Path) -> List[ManifestRecord]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"Dataset manifest not found: {path}")
    records = []
    for number, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(ManifestRecord.model_validate_json(line))
        except ValidationError as exc:
            raise ParseError(f"{path}:{number}: invalid manifest record: {exc}") from None
    return records
