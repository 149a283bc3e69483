#!/usr/bin/env python3
"""Rasterizer adapter: renders a PDF to page-<i>.png files plus manifest.json.

Usage: rasterize_pdf.py [--kind answer_sheet|question_paper] <pdf> <dpi> <outdir>
"""
import argparse
import json
import pathlib
import sys

import pypdfium2 as pdfium


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--kind", default="answer_sheet", choices=["answer_sheet", "question_paper"])
    parser.add_argument("pdf")
    parser.add_argument("dpi", type=int)
    parser.add_argument("outdir")
    args = parser.parse_args()

    pdf_path = pathlib.Path(args.pdf)
    out = pathlib.Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        doc = pdfium.PdfDocument(str(pdf_path))
    except pdfium.PdfiumError as exc:
        print(f"cannot open {pdf_path}: {exc}", file=sys.stderr)
        return 2

    pages = []
    for i, page in enumerate(doc):
        image = page.render(scale=args.dpi / 72.0, grayscale=True).to_pil()
        name = f"page-{i}.png"
        image.save(out / name)
        pages.append({"index": i, "file": name})
    if not pages:
        print(f"{pdf_path} has no pages", file=sys.stderr)
        return 3

    manifest = {
        "bundle_id": pdf_path.stem,
        "kind": args.kind,
        "pages": pages,
        "source_name": pdf_path.name,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
