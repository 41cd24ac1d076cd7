use std::alloc::{GlobalAlloc, Layout, System};
use std::io::Read;
use std::sync::atomic::{AtomicUsize, Ordering};

use wikicite::dump::DumpReader;

struct Counting;

static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let ptr = System.alloc(layout);
        if !ptr.is_null() {
            let now = LIVE.fetch_add(layout.size(), Ordering::SeqCst) + layout.size();
            PEAK.fetch_max(now, Ordering::SeqCst);
        }
        ptr
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        LIVE.fetch_sub(layout.size(), Ordering::SeqCst);
    }
}

#[global_allocator]
static GLOBAL: Counting = Counting;

/// Produces a dump of `pages` identical pages without holding it in memory.
struct SyntheticDump {
    pages_left: usize,
    pending: Vec<u8>,
    pos: usize,
    footer_done: bool,
}

const PAGE: &str = "<page><title>Synthetic</title><ns>0</ns><id>1</id><revision><text>\
Body text with a citation {{cite web|url=https://www.bbc.co.uk/a|title=A}} and padding \
xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx\
</text></revision></page>\n";

impl SyntheticDump {
    fn new(pages: usize) -> Self {
        SyntheticDump {
            pages_left: pages,
            pending: b"<mediawiki xml:lang=\"en\">\n".to_vec(),
            pos: 0,
            footer_done: false,
        }
    }
}

impl Read for SyntheticDump {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        while self.pos == self.pending.len() {
            self.pending.clear();
            self.pos = 0;
            if self.pages_left > 0 {
                self.pages_left -= 1;
                self.pending.extend_from_slice(PAGE.as_bytes());
            } else if !self.footer_done {
                self.footer_done = true;
                self.pending.extend_from_slice(b"</mediawiki>\n");
            } else {
                return Ok(0);
            }
        }
        let n = buf.len().min(self.pending.len() - self.pos);
        buf[..n].copy_from_slice(&self.pending[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

/// Peak bytes allocated above the starting level while streaming the dump.
fn peak_while_streaming(pages: usize) -> usize {
    let reader = DumpReader::new(std::io::BufReader::new(SyntheticDump::new(pages)), false);
    let base = LIVE.load(Ordering::SeqCst);
    PEAK.store(base, Ordering::SeqCst);
    let mut seen = 0;
    let mut text_bytes = 0;
    for page in reader {
        let page = page.unwrap();
        seen += 1;
        text_bytes += page.wikitext.len();
    }
    assert_eq!(seen, pages);
    assert!(text_bytes > 0);
    PEAK.load(Ordering::SeqCst) - base
}

#[test]
fn peak_memory_does_not_grow_with_page_count() {
    let small = peak_while_streaming(10);
    let large = peak_while_streaming(10_000);
    assert!(
        large <= small + small / 2 + 4096,
        "peak {large} bytes for 10000 pages vs {small} bytes for 10 pages"
    );
}
