use bitflags::bitflags;

bitflags! {
    /// Conditions raised while processing a drop. They never abort a run; they
    /// travel with the results so affected rows can be filtered afterwards.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
    pub struct Flags: u32 {
        const RANK_COLLAPSE = 1 << 0;
        const FIT_RESIDUAL = 1 << 1;
        const REGULARIZED = 1 << 2;
        const TRACKING_LOST = 1 << 3;
        const DEGENERATE_EIGEN = 1 << 4;
        const RANK_DEFICIENT = 1 << 5;
        const EXTRAPOLATED = 1 << 6;
        const ZERO_NORM_FALLBACK = 1 << 7;
        const ILL_CONDITIONED = 1 << 8;
        const DROP_FAILED = 1 << 9;
    }
}

impl Flags {
    /// `|`-separated flag names, empty when no flag is set.
    pub fn to_names(self) -> String {
        self.iter_names().map(|(name, _)| name.to_ascii_lowercase()).collect::<Vec<_>>().join("|")
    }

    pub fn from_names(text: &str) -> Option<Flags> {
        let mut out = Flags::empty();
        for part in text.split('|').filter(|p| !p.is_empty()) {
            out |= Flags::from_name(&part.to_ascii_uppercase())?;
        }
        Some(out)
    }
}
