//! Set-constrained delivery broadcast and the objects it gives you.

pub mod check;
pub mod objects;
pub mod scd_mp;
pub mod scd_rw;
pub mod sim;
pub mod types;

/// The guide's listings, compiled as doctests.
#[cfg(doctest)]
mod book {
    macro_rules! chapters {
        ($($name:ident => $file:literal),* $(,)?) => {
            $(
                #[doc = include_str!(concat!("../../../book/src/", $file))]
                mod $name {}
            )*
        };
    }

    chapters! {
        introduction => "introduction.md",
        scd_broadcast => "scd-broadcast.md",
        message_passing => "message-passing.md",
        snapshot_objects => "snapshot-objects.md",
        registers => "registers.md",
        shared_memory => "shared-memory.md",
        simulator => "simulator.md",
        checking => "checking.md",
        cli => "cli.md",
    }
}
