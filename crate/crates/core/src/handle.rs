use std::num::{NonZeroU64, NonZeroUsize};
use std::sync::Arc;

/// A payload that fits in one non-zero machine word.
///
/// Zero is reserved: the queue uses it to mark a consumed payload slot, so a
/// handle can never be NIL.
///
/// # Safety
/// `from_raw(into_raw(x))` must give back `x`, and a raw value must be
/// converted back at most once.
pub unsafe trait Handle: Send + Sized {
    fn into_raw(self) -> NonZeroUsize;

    /// # Safety
    /// `raw` must have been produced by `into_raw` and not converted back yet.
    unsafe fn from_raw(raw: NonZeroUsize) -> Self;
}

unsafe impl Handle for NonZeroUsize {
    #[inline]
    fn into_raw(self) -> NonZeroUsize {
        self
    }

    #[inline]
    unsafe fn from_raw(raw: NonZeroUsize) -> Self {
        raw
    }
}

#[cfg(target_pointer_width = "64")]
unsafe impl Handle for NonZeroU64 {
    #[inline]
    fn into_raw(self) -> NonZeroUsize {
        // Lossless on 64-bit targets.
        NonZeroUsize::new(self.get() as usize).unwrap()
    }

    #[inline]
    unsafe fn from_raw(raw: NonZeroUsize) -> Self {
        NonZeroU64::new_unchecked(raw.get() as u64)
    }
}

unsafe impl<T: Send> Handle for Box<T> {
    fn into_raw(self) -> NonZeroUsize {
        let p = Box::into_raw(self);
        // Box pointers are never null, even for zero-sized types.
        NonZeroUsize::new(p as usize).unwrap()
    }

    unsafe fn from_raw(raw: NonZeroUsize) -> Self {
        Box::from_raw(raw.get() as *mut T)
    }
}

unsafe impl<T: Send + Sync> Handle for Arc<T> {
    fn into_raw(self) -> NonZeroUsize {
        NonZeroUsize::new(Arc::into_raw(self) as usize).unwrap()
    }

    unsafe fn from_raw(raw: NonZeroUsize) -> Self {
        Arc::from_raw(raw.get() as *const T)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boxed_round_trip() {
        let b = Box::new(String::from("payload"));
        let raw = b.into_raw();
        let back: Box<String> = unsafe { Handle::from_raw(raw) };
        assert_eq!(*back, "payload");
    }

    #[test]
    fn zero_is_not_a_handle() {
        assert!(NonZeroU64::new(0).is_none());
        let h = NonZeroU64::new(42).unwrap();
        assert_eq!(unsafe { NonZeroU64::from_raw(h.into_raw()) }, h);
    }
}
