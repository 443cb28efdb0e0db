import pytest

from ipag.calls import index_call_depths, link_calls
from ipag.compress import compress, merge_sequences
from ipag.frontend import parse_mini_c
from ipag.graph import build_preliminary

# The binutils snippet around CVE-2017-17122: a relocation-dump entry point
# calling into a section walker that calls the per-section dumper. Bodies
# that the original elides are trimmed to what the mini-C subset carries.
RELOC_DUMP_SOURCE = """\
static void dump_relocs (bfd *abfd){
    bfd_map_over_sections (abfd, dump_relocs_in_section, NULL);}

void bfd_map_over_sections (bfd *abfd, void (*func) (bfd *, asection *, void *), void *data){
  bfd_boolean more_sections;
  asection *section;
  BFD_ASSERT (abfd != NULL);
  BFD_ASSERT (func != NULL);
  for (section = abfd->sections; section != NULL; section = section->next){
    dump_relocs_in_section (abfd, section, NULL);}
}

static void dump_relocs_in_section (bfd *abfd, asection *section, void *dummy){
    arelent **relpp;
}
"""


@pytest.fixture(scope="session")
def reloc_asts():
    return parse_mini_c(RELOC_DUMP_SOURCE)


@pytest.fixture(scope="session")
def dump_relocs_ast(reloc_asts):
    return reloc_asts[0]


@pytest.fixture(scope="session")
def dump_relocs_preliminary(dump_relocs_ast):
    return build_preliminary(dump_relocs_ast)


@pytest.fixture(scope="session")
def dump_relocs_sequence_reduced(dump_relocs_preliminary):
    return merge_sequences(dump_relocs_preliminary)


@pytest.fixture(scope="session")
def reloc_reduced(reloc_asts):
    return [compress(build_preliminary(a)) for a in reloc_asts]


@pytest.fixture(scope="session")
def reloc_complete(reloc_reduced):
    index = index_call_depths(reloc_reduced)
    return link_calls(reloc_reduced, index)
