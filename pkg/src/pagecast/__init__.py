"""pagecast: HTML e-books in, narrated audiobooks out.

The library is organized around the pipeline stages:

- ``ingest``    – find and decode HTML e-books on disk
- ``dom``       – forgiving HTML parsing into an immutable tree
- ``features``  – TF-IDF over DOM structure tokens plus hand-crafted stats
- ``cluster``   – k-means grouping of books into format families, 2-D plots
- ``normalize`` – rule-based removal of non-narration content
- ``script``    – chapterized narration scripts with speakers, emotions, SSML
- ``synth``     – speech backends (deterministic test tone / remote HTTP)
- ``audio``     – PCM16 WAV writing and chapter assembly
- ``pipeline``  – parallel batch orchestration with resumable manifests
- ``service``   – HTTP API for search, preview, enrollment, and build jobs
- ``cli``       – the ``pagecast`` command
"""

__version__ = "0.1.0"
