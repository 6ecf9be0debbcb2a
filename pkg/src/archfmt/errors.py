"""Exception hierarchy shared by all archfmt modules.

Every error that refers to a position in a file carries the file name and
byte offset so callers can report actionable diagnostics.
"""


class ArchfmtError(Exception):
    """Base class for all toolkit errors."""


class IoFailure(ArchfmtError):
    pass


# --- WARC layer ---

class MalformedHeader(ArchfmtError):
    def __init__(self, file, offset, detail):
        super().__init__(f"{file}@{offset}: malformed WARC header: {detail}")
        self.file = file
        self.offset = offset


class LengthMismatch(ArchfmtError):
    def __init__(self, file, offset, detail):
        super().__init__(f"{file}@{offset}: {detail}")
        self.file = file
        self.offset = offset


class GzipCorrupt(ArchfmtError):
    def __init__(self, file, offset, detail):
        super().__init__(f"{file}@{offset}: corrupt gzip member: {detail}")
        self.file = file
        self.offset = offset


class BadOffset(ArchfmtError):
    def __init__(self, file, offset, detail="no record starts here"):
        super().__init__(f"{file}@{offset}: {detail}")
        self.file = file
        self.offset = offset


# --- CDX layer ---

class NotAbsoluteUrl(ArchfmtError):
    pass


class BadFieldCount(ArchfmtError):
    def __init__(self, file, line_no, got):
        super().__init__(f"{file}:{line_no}: expected 9 CDX fields, got {got}")
        self.line_no = line_no


class BadTimestamp(ArchfmtError):
    pass


class BadDate(ArchfmtError):
    pass


# --- container formats ---

class SchemaMismatch(ArchfmtError):
    pass


class UnsortedInput(ArchfmtError):
    def __init__(self, row_index, detail="sort key violated"):
        super().__init__(f"row {row_index}: {detail}")
        self.row_index = row_index


class UnknownColumn(ArchfmtError):
    pass


class StatlessColumn(ArchfmtError):
    pass


class BadMagic(ArchfmtError):
    pass


class FooterCorrupt(ArchfmtError):
    pass


class DecompressFailure(ArchfmtError):
    pass


class SyncLost(ArchfmtError):
    def __init__(self, file, offset, detail="sync marker not found"):
        super().__init__(f"{file}@{offset}: {detail}")
        self.file = file
        self.offset = offset


# --- convert / query / bench ---

class Excluded(ArchfmtError):
    pass


class BackendUnavailable(ArchfmtError):
    pass


class Unachievable(ArchfmtError):
    pass


class EquivalenceFailure(ArchfmtError):
    pass


class BadCsv(ArchfmtError):
    pass
