//! Data-parallel helpers. With the `parallel` feature (default) batch work runs
//! on the rayon pool; without it, everything runs on the calling thread.
//! Results are always returned in input order, so reductions over them are
//! deterministic either way.

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Exec {
    #[cfg_attr(feature = "parallel", default)]
    Parallel,
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
}

impl Exec {
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
            }
            _ => items.iter().enumerate().map(|(i, t)| f(i, t)).collect(),
        }
    }

    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let xs: Vec<u32> = (0..500).collect();
        let par = Exec::Parallel.map(&xs, |i, x| (i as u32) * 2 + x);
        let seq = Exec::Sequential.map(&xs, |i, x| (i as u32) * 2 + x);
        assert_eq!(par, seq);
        assert_eq!(Exec::Parallel.map_range(10, |i| i), (0..10).collect::<Vec<_>>());
    }
}
