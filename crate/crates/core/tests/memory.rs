//! Peak heap use of regular-tree percolation, measured by a counting allocator.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};

use perctree::regular_tree::{percolate_regular, RegularParams};
use perctree::rng::stream_from_seed;

struct Counting;

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let ptr = unsafe { System.alloc(layout) };
        if !ptr.is_null() {
            let now = CURRENT.fetch_add(layout.size(), Ordering::SeqCst) + layout.size();
            PEAK.fetch_max(now, Ordering::SeqCst);
        }
        ptr
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        CURRENT.fetch_sub(layout.size(), Ordering::SeqCst);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let out = unsafe { System.realloc(ptr, layout, new_size) };
        if !out.is_null() {
            if new_size >= layout.size() {
                let now = CURRENT.fetch_add(new_size - layout.size(), Ordering::SeqCst) + new_size - layout.size();
                PEAK.fetch_max(now, Ordering::SeqCst);
            } else {
                CURRENT.fetch_sub(layout.size() - new_size, Ordering::SeqCst);
            }
        }
        out
    }
}

#[global_allocator]
static ALLOCATOR: Counting = Counting;

#[test]
fn regular_percolation_memory_is_depth_plus_clusters() {
    let (d, h) = (2u32, 20u32);
    let params = RegularParams::new(d, h, 1.0).unwrap();
    let mut rng = stream_from_seed(42);

    let baseline = CURRENT.load(Ordering::SeqCst);
    PEAK.store(baseline, Ordering::SeqCst);
    let report = percolate_regular(&params, &mut rng);
    let peak = PEAK.load(Ordering::SeqCst) - baseline;

    let clusters = 1 + report.ranked.len();
    let budget = 64 * clusters + 1024 * (h * d) as usize;
    eprintln!("peak {peak} bytes for {} vertices and {clusters} clusters, budget {budget}", params.vertex_count());
    assert!(peak <= budget, "peak {peak} exceeds {budget}");
}
