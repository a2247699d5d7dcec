//! Native hardware counters through the Linux `perf_event_open` interface.
//!
//! Counters are opened on the calling thread with inheritance enabled, so
//! worker threads spawned afterwards fold their counts into the parent when
//! they exit. Reads taken after a dispatch has joined its workers therefore
//! cover the whole parallel section.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("hardware counters unavailable: {0}")]
pub struct Unavailable(pub String);

/// One reading of each counter; `None` where the counter could not be opened.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HwReading {
    pub instructions: Option<u64>,
    pub cycles: Option<u64>,
    pub cache_references: Option<u64>,
    pub cache_misses: Option<u64>,
}

impl HwReading {
    /// Per-counter difference `self - earlier`, saturating at zero.
    pub fn delta(&self, earlier: &HwReading) -> HwReading {
        let d = |a: Option<u64>, b: Option<u64>| Some(a?.saturating_sub(b?));
        HwReading {
            instructions: d(self.instructions, earlier.instructions),
            cycles: d(self.cycles, earlier.cycles),
            cache_references: d(self.cache_references, earlier.cache_references),
            cache_misses: d(self.cache_misses, earlier.cache_misses),
        }
    }
}

#[cfg(target_os = "linux")]
mod imp {
    use super::{HwReading, Unavailable};
    use std::fs::File;
    use std::io::Read;
    use std::os::fd::FromRawFd;

    const PERF_TYPE_HARDWARE: u32 = 0;
    const PERF_COUNT_HW_CPU_CYCLES: u64 = 0;
    const PERF_COUNT_HW_INSTRUCTIONS: u64 = 1;
    const PERF_COUNT_HW_CACHE_REFERENCES: u64 = 2;
    const PERF_COUNT_HW_CACHE_MISSES: u64 = 3;
    const PERF_FLAG_FD_CLOEXEC: libc::c_ulong = 8;

    const FLAG_INHERIT: u64 = 1 << 1;
    const FLAG_EXCLUDE_KERNEL: u64 = 1 << 5;
    const FLAG_EXCLUDE_HV: u64 = 1 << 6;

    /// First published revision of `struct perf_event_attr` (64 bytes).
    #[repr(C)]
    #[derive(Default)]
    struct PerfEventAttr {
        type_: u32,
        size: u32,
        config: u64,
        sample_period: u64,
        sample_type: u64,
        read_format: u64,
        flags: u64,
        wakeup_events: u32,
        bp_type: u32,
        config1: u64,
    }

    fn open_counter(config: u64) -> std::io::Result<File> {
        let attr = PerfEventAttr {
            type_: PERF_TYPE_HARDWARE,
            size: std::mem::size_of::<PerfEventAttr>() as u32,
            config,
            flags: FLAG_INHERIT | FLAG_EXCLUDE_KERNEL | FLAG_EXCLUDE_HV,
            ..Default::default()
        };
        // SAFETY: `attr` is a valid, fully initialized perf_event_attr of the
        // size it declares; pid 0 / cpu -1 selects the calling thread.
        let fd = unsafe {
            libc::syscall(
                libc::SYS_perf_event_open,
                &attr as *const PerfEventAttr,
                0 as libc::pid_t,
                -1 as libc::c_int,
                -1 as libc::c_int,
                PERF_FLAG_FD_CLOEXEC,
            )
        };
        if fd < 0 {
            return Err(std::io::Error::last_os_error());
        }
        // SAFETY: the kernel returned a fresh descriptor that we now own.
        Ok(unsafe { File::from_raw_fd(fd as libc::c_int) })
    }

    fn read_counter(file: &File) -> Option<u64> {
        let mut buf = [0u8; 8];
        (&*file).read_exact(&mut buf).ok()?;
        Some(u64::from_ne_bytes(buf))
    }

    #[derive(Debug)]
    pub struct HardwareCounters {
        instructions: Option<File>,
        cycles: Option<File>,
        cache_references: Option<File>,
        cache_misses: Option<File>,
    }

    impl HardwareCounters {
        pub fn open() -> Result<Self, Unavailable> {
            let mut last_err = None;
            let mut open = |cfg| match open_counter(cfg) {
                Ok(f) => Some(f),
                Err(e) => {
                    last_err = Some(e);
                    None
                }
            };
            let counters = Self {
                instructions: open(PERF_COUNT_HW_INSTRUCTIONS),
                cycles: open(PERF_COUNT_HW_CPU_CYCLES),
                cache_references: open(PERF_COUNT_HW_CACHE_REFERENCES),
                cache_misses: open(PERF_COUNT_HW_CACHE_MISSES),
            };
            if counters.instructions.is_none()
                && counters.cycles.is_none()
                && counters.cache_references.is_none()
                && counters.cache_misses.is_none()
            {
                let why = last_err.map_or_else(|| "no counters opened".to_owned(), |e| e.to_string());
                return Err(Unavailable(format!("perf_event_open: {why}")));
            }
            Ok(counters)
        }

        pub fn read(&self) -> HwReading {
            HwReading {
                instructions: self.instructions.as_ref().and_then(read_counter),
                cycles: self.cycles.as_ref().and_then(read_counter),
                cache_references: self.cache_references.as_ref().and_then(read_counter),
                cache_misses: self.cache_misses.as_ref().and_then(read_counter),
            }
        }
    }
}

#[cfg(not(target_os = "linux"))]
mod imp {
    use super::{HwReading, Unavailable};

    #[derive(Debug)]
    pub struct HardwareCounters;

    impl HardwareCounters {
        pub fn open() -> Result<Self, Unavailable> {
            Err(Unavailable("no native counter interface on this platform".to_owned()))
        }

        pub fn read(&self) -> HwReading {
            HwReading::default()
        }
    }
}

pub use imp::HardwareCounters;

/// Opens instruction, cycle and last-level-cache counters for this thread.
pub fn hardware_backend_open() -> Result<HardwareCounters, Unavailable> {
    HardwareCounters::open()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_saturates_and_keeps_availability() {
        let a = HwReading { instructions: Some(10), cycles: None, cache_references: Some(5), cache_misses: Some(1) };
        let b = HwReading { instructions: Some(25), cycles: Some(3), cache_references: Some(4), cache_misses: Some(2) };
        let d = b.delta(&a);
        assert_eq!(d.instructions, Some(15));
        assert_eq!(d.cycles, None);
        assert_eq!(d.cache_references, Some(0));
        assert_eq!(d.cache_misses, Some(1));
    }

    #[test]
    fn open_never_panics() {
        // Either outcome is valid; sandboxes commonly refuse the syscall.
        match hardware_backend_open() {
            Ok(c) => {
                let r = c.read();
                let mut x = 0u64;
                for i in 0..1_000_000u64 {
                    x = x.wrapping_add(std::hint::black_box(i));
                }
                std::hint::black_box(x);
                if let (Some(a), Some(b)) = (r.instructions, c.read().instructions) {
                    assert!(b > a);
                }
            }
            Err(Unavailable(msg)) => assert!(!msg.is_empty()),
        }
    }
}
